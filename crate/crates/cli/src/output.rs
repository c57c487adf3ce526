/// One CSV artifact: a `# key=value,...` metadata line, a header row and records.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub metadata: Vec<(&'static str, String)>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(metadata: Vec<(&'static str, String)>, header: Vec<&'static str>) -> Self {
        Table { metadata, header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, std::io::Error> {
        let meta: Vec<String> = self.metadata.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let mut buf = format!("# {}\n", meta.join(",")).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.header)?;
            for row in &self.rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        Ok(buf)
    }
}
