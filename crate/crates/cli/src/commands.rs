use m2m_access::event_sim::{simulate, AttemptModel, SimConfig};
use m2m_access::mc::{binomial_stderr, mix_seed};
use m2m_access::optimizer::Constrained;
use m2m_access::protocol::{
    crossover_payload, downlink_spectral_efficiency, lambda_grid, payload_grid, CapacityAnalysis, Crossover,
    StageCases,
};
use m2m_access::retransmission::failure_prob;
use m2m_access::{
    BackoffConfig, CoordinatedStrategy, Fading, Protocol, ProtocolOverheads, RateGrid,
    StrategyModel, StrategySelection, UncoordinatedStrategy,
};

use crate::args::{DeltaArgs, LambdaArgs, LambdaGridArgs, ProtocolArgs, RateArgs, SelectionArgs, STRATEGY_NAMES};
use crate::error::CliError;
use crate::output::Table;
use crate::scenario::{parse_case, parse_strategy, pick_list, Common, Scenario};

/// Arrival rate for a new packet stream in `validate-delta`; it only sets
/// how many packets a minislot carries.
const DELTA_LAMBDA: f64 = 16.0;

fn load(common: &crate::args::CommonArgs) -> Result<Scenario, CliError> {
    match &common.config {
        Some(path) => Scenario::load(path),
        None => Ok(Scenario::default()),
    }
}

/// Strategy models for every requested (strategy, case) pair; coordinated
/// strategies ignore the retransmission case and appear once.
fn models(sel: &SelectionArgs, file: &Scenario, common: &Common) -> Result<Vec<(StrategyModel, &'static str)>, CliError> {
    let names = pick_list(&sel.strategy, &file.strategy, STRATEGY_NAMES.iter().map(|s| s.to_string()).collect());
    let cases = pick_list(&sel.case, &file.case, vec!["1tx".into(), "4tx".into(), "8tx".into()]);
    if names.is_empty() || cases.is_empty() {
        return Err(CliError::Usage("empty strategy or case list".into()));
    }
    let strategies = names.iter().map(|n| parse_strategy(n)).collect::<Result<Vec<_>, _>>()?;
    let cases = cases
        .iter()
        .map(|n| Ok((parse_case(n)?, case_label(n))))
        .collect::<Result<Vec<_>, CliError>>()?;
    let (mu, model, mc) = (common.mu()?, common.gain_model(), common.mc()?);
    let mut out = Vec::new();
    for s in strategies {
        if s.is_coordinated() {
            out.push((StrategyModel::new(s, BackoffConfig::one_tx(), mu, model, &mc)?, "none"));
        } else {
            for &(backoff, label) in &cases {
                out.push((StrategyModel::new(s, backoff, mu, model, &mc)?, label));
            }
        }
    }
    Ok(out)
}

fn case_label(name: &str) -> &'static str {
    match name {
        "1tx" => "1tx",
        "4tx" => "4tx",
        _ => "8tx",
    }
}

fn lambdas(args: &LambdaGridArgs, file: &Scenario, default: (i32, i32, usize)) -> Result<Vec<f64>, CliError> {
    let explicit = pick_list(&args.lambda, &file.lambda, Vec::new());
    let grid = if !explicit.is_empty() {
        explicit
    } else if args.lambda.is_empty() && file.lambda.as_ref().is_some_and(Vec::is_empty) {
        Vec::new()
    } else {
        let lo = args.lambda_log2_min.or(file.lambda_log2_min).unwrap_or(default.0);
        let hi = args.lambda_log2_max.or(file.lambda_log2_max).unwrap_or(default.1);
        let per = args.per_octave.or(file.per_octave).unwrap_or(default.2);
        if hi < lo || per == 0 {
            Vec::new()
        } else {
            lambda_grid(lo, hi, per)
        }
    };
    if grid.is_empty() {
        return Err(CliError::Usage("empty arrival-rate grid".into()));
    }
    if grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(CliError::Usage("arrival rates must be positive".into()));
    }
    Ok(grid)
}

fn rate_values(args: &RateArgs, file: &Scenario) -> Result<Vec<f64>, CliError> {
    let lo = args.rate_min.or(file.rate_min).unwrap_or(0.01);
    let hi = args.rate_max.or(file.rate_max).unwrap_or(4.0);
    let points = args.rate_points.or(file.rate_points).unwrap_or(60);
    if points == 0 {
        return Err(CliError::Usage("empty rate grid".into()));
    }
    if points == 1 {
        return Ok(RateGrid::new(vec![lo])?.values().to_vec());
    }
    Ok(RateGrid::logarithmic(lo, hi, points)?.values().to_vec())
}

fn f(v: f64) -> String {
    v.to_string()
}

pub fn outage_vs_rate(args: &RateArgs) -> Result<Table, CliError> {
    let file = load(&args.common)?;
    let common = Common::resolve(&args.common, &file)?;
    let lams = lambdas(&args.lambdas, &file, (4, 4, 1))?;
    let rates = rate_values(args, &file)?;
    let models = models(&args.selection, &file, &common)?;
    let mut header = vec!["rate_bpshz", "strategy", "case", "outage", "stderr"];
    if lams.len() > 1 {
        header.insert(0, "lambda");
    }
    let mut table = Table::new(common.metadata(), header);
    for &lambda in &lams {
        for (model, case) in &models {
            for p in model.sweep(lambda, &rates)? {
                let e = model.outage_estimate(p.x, p.rate);
                let mut row = vec![f(p.rate), model.strategy().name().into(), (*case).into(), f(e.epsilon), f(e.stderr)];
                if lams.len() > 1 {
                    row.insert(0, f(lambda));
                }
                table.push(row);
            }
        }
    }
    Ok(table)
}

pub fn throughput_vs_rate(args: &RateArgs) -> Result<Table, CliError> {
    let file = load(&args.common)?;
    let common = Common::resolve(&args.common, &file)?;
    let lams = lambdas(&args.lambdas, &file, (4, 4, 1))?;
    let rates = rate_values(args, &file)?;
    let models = models(&args.selection, &file, &common)?;
    let mut header = vec!["rate_bpshz", "strategy", "case", "outage", "failure", "attempt_rate", "throughput_bpshz"];
    if lams.len() > 1 {
        header.insert(0, "lambda");
    }
    let mut table = Table::new(common.metadata(), header);
    for &lambda in &lams {
        for (model, case) in &models {
            for p in model.sweep(lambda, &rates)? {
                let mut row = vec![
                    f(p.rate),
                    model.strategy().name().into(),
                    (*case).into(),
                    f(p.epsilon),
                    f(p.delta),
                    f(p.x),
                    f(p.throughput),
                ];
                if lams.len() > 1 {
                    row.insert(0, f(lambda));
                }
                table.push(row);
            }
        }
    }
    Ok(table)
}

pub fn max_throughput_vs_lambda(args: &LambdaArgs) -> Result<Table, CliError> {
    let file = load(&args.common)?;
    let common = Common::resolve(&args.common, &file)?;
    let lams = lambdas(&args.lambdas, &file, (0, 10, 2))?;
    let models = models(&args.selection, &file, &common)?;
    let grid = RateGrid::default();
    let mut table = Table::new(
        common.metadata(),
        vec!["lambda", "strategy", "case", "R_star", "S_star", "outage_at_opt"],
    );
    for (model, case) in &models {
        for &lambda in &lams {
            let best = model.max_throughput(lambda, common.constraint, &grid)?;
            let (r, s, e) = match best.constrained {
                Constrained::Feasible(p) => (f(p.rate), f(p.throughput), f(p.epsilon)),
                Constrained::Infeasible { .. } => ("0".into(), "0".into(), String::new()),
            };
            table.push(vec![f(lambda), model.strategy().name().into(), (*case).into(), r, s, e]);
        }
    }
    Ok(table)
}

/// Labelled one-stage and two-stage variants compared by `protocol-capacity`.
pub fn protocol_variants() -> [(&'static str, Protocol, StrategySelection); 4] {
    [
        ("one-stage-optimal", Protocol::OneStage, StrategySelection::one_stage(UncoordinatedStrategy::Optimal)),
        ("one-stage-aloha", Protocol::OneStage, StrategySelection::one_stage(UncoordinatedStrategy::AlohaFdma)),
        ("two-stage-coordinated-optimal", Protocol::TwoStage, StrategySelection::two_stage(CoordinatedStrategy::Optimal)),
        ("two-stage-coordinated-fdma", Protocol::TwoStage, StrategySelection::two_stage(CoordinatedStrategy::Fdma)),
    ]
}

/// Capacity curves plus the crossovers against the coordinated-optimal two-stage curve.
pub struct ProtocolResult {
    pub table: Table,
    pub downlink: f64,
    pub payloads: Vec<f64>,
    /// `(label, λ*)` per variant, aligned with `payloads`.
    pub curves: Vec<(&'static str, Vec<f64>)>,
}

impl ProtocolResult {
    pub fn curve(&self, label: &str) -> &[f64] {
        &self.curves.iter().find(|(l, _)| *l == label).expect("known protocol label").1
    }

    pub fn crossover(&self, a: &str, b: &str) -> Result<Crossover, CliError> {
        Ok(crossover_payload(&self.payloads, self.curve(a), self.curve(b))?)
    }
}

pub fn protocol_capacity(args: &ProtocolArgs) -> Result<ProtocolResult, CliError> {
    let file = load(&args.common)?;
    let common = Common::resolve(&args.common, &file)?;
    let lams = lambdas(&args.lambdas, &file, (-4, 10, 4))?;
    if lams.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage("arrival rates must be increasing".into()));
    }
    let lo = args.payload_min.or(file.payload_min).unwrap_or(10.0);
    let hi = args.payload_max.or(file.payload_max).unwrap_or(10_000.0);
    let points = args.payload_points.or(file.payload_points).unwrap_or(31);
    if points < 2 || !(lo > 0.0 && hi > lo) {
        return Err(CliError::Usage("payload grid needs 0 < payload_min < payload_max and at least 2 points".into()));
    }
    let optimal_case = args.optimal_case.clone().or(file.optimal_case.clone()).unwrap_or_else(|| "1tx".into());
    let aloha_case = args.aloha_case.clone().or(file.aloha_case.clone()).unwrap_or_else(|| "4tx".into());
    let cases = StageCases { uncoordinated_optimal: parse_case(&optimal_case)?, aloha: parse_case(&aloha_case)? };

    let (mu, model, mc) = (common.mu()?, common.gain_model(), common.mc()?);
    // Downlink rates average out small-scale fading.
    let downlink = downlink_spectral_efficiency(mu, &model.with_fading(Fading::Averaged), &mc)?.harmonic;
    let analysis = CapacityAnalysis::new(mu, model, downlink, ProtocolOverheads::default(), cases, &mc)?
        .with_constraint(common.constraint)?
        .with_lambda_grid(lams)?;
    let payloads = payload_grid(lo, hi, points);

    let mut meta = common.metadata();
    meta.push(("optimal_case", optimal_case));
    meta.push(("aloha_case", aloha_case));
    meta.push(("downlink_bpshz", f(downlink)));
    let mut table = Table::new(meta, vec!["payload_bits", "protocol", "lambda_star"]);
    let mut curves = Vec::new();
    for (label, protocol, selection) in protocol_variants() {
        let curve = analysis.capacity_curve(&payloads, protocol, &selection)?;
        for (&l, &lam) in payloads.iter().zip(&curve) {
            table.push(vec![f(l), label.into(), f(lam)]);
        }
        curves.push((label, curve));
    }
    Ok(ProtocolResult { table, downlink, payloads, curves })
}

pub fn validate_delta(args: &DeltaArgs) -> Result<Table, CliError> {
    let file = load(&args.common)?;
    let common = Common::resolve(&args.common, &file)?;
    let ms = pick_list(&args.minislots, &file.minislots, vec![4, 10, 20]);
    let zs = pick_list(&args.max_attempts, &file.max_attempts, vec![1, 2, 4]);
    let ws = pick_list(&args.backoff_window, &file.backoff_window, vec![1, 3, 5]);
    let eps = pick_list(&args.epsilon, &file.epsilon, vec![0.1, 0.5, 0.9]);
    let packets = args.packets.or(file.packets).unwrap_or(100_000);
    if ms.is_empty() || zs.is_empty() || ws.is_empty() || eps.is_empty() || packets == 0 {
        return Err(CliError::Usage("empty validation grid".into()));
    }
    let mut table = Table::new(
        common.metadata(),
        vec!["minislots", "max_attempts", "backoff_window", "epsilon", "delta", "delta_hat", "stderr", "packets", "within_3sigma"],
    );
    let mut cell = 0u64;
    for &m in &ms {
        for &z in &zs {
            for &w in &ws {
                let backoff = BackoffConfig::new(m, z, w)?;
                for &e in &eps {
                    let delta = failure_prob(e, &backoff)?;
                    let sim = simulate(&delta_sim(e, backoff, packets, mix_seed(common.seed, cell)))?;
                    cell += 1;
                    let n = sim.stats.new_arrivals;
                    let stderr = binomial_stderr(delta, n as f64);
                    let within = (sim.delta_hat - delta).abs() <= 3.0 * stderr;
                    table.push(vec![
                        m.to_string(),
                        z.to_string(),
                        w.to_string(),
                        f(e),
                        f(delta),
                        f(sim.delta_hat),
                        f(stderr),
                        n.to_string(),
                        within.to_string(),
                    ]);
                }
            }
        }
    }
    Ok(table)
}

/// Simulation long enough to count at least `packets` new packets.
pub fn delta_sim(epsilon: f64, backoff: BackoffConfig, packets: u64, seed: u64) -> SimConfig {
    let per_minislot = DELTA_LAMBDA * backoff.minislot_duration_s;
    let cfg = SimConfig::new(DELTA_LAMBDA, backoff, AttemptModel::ConstantEpsilon(epsilon), seed);
    // 5% headroom over the Poisson mean keeps the count above `packets`.
    let window = (1.05 * packets as f64 / per_minislot).ceil() + 10.0 * (packets as f64).sqrt() / per_minislot;
    let horizon = (window / (1.0 - cfg.warmup_fraction)).ceil() as u64 + backoff.minislots_per_slot as u64;
    cfg.with_horizon(horizon.max(m2m_access::event_sim::MIN_HORIZON))
}

/// Runs one parsed command to a rendered CSV.
pub fn execute(command: &crate::args::Command) -> Result<(Vec<u8>, Option<std::path::PathBuf>), CliError> {
    use crate::args::Command::*;
    let (table, out) = match command {
        OutageVsRate(a) => (outage_vs_rate(a)?, &a.common),
        ThroughputVsRate(a) => (throughput_vs_rate(a)?, &a.common),
        MaxThroughputVsLambda(a) => (max_throughput_vs_lambda(a)?, &a.common),
        ProtocolCapacity(a) => {
            let r = protocol_capacity(a)?;
            for (label, _) in r.curves.iter().filter(|(l, _)| *l != "two-stage-coordinated-optimal") {
                let msg = match r.crossover(label, "two-stage-coordinated-optimal")? {
                    Crossover::At(l) => format!("{l:.1} bits"),
                    Crossover::NoCrossover => "none on the payload grid".into(),
                };
                eprintln!("crossover {label} vs two-stage-coordinated-optimal: {msg}");
            }
            (r.table, &a.common)
        }
        ValidateDelta(a) => (validate_delta(a)?, &a.common),
    };
    // The file's `out` key applies when no flag is given.
    let file = load(out)?;
    let path = out.out.clone().or_else(|| file.out.map(Into::into));
    Ok((table.to_csv()?, path))
}

