use std::fmt::Debug;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use tcskin::formats::{with_suffix, write_comments, write_grm};
use tcskin::{Real, RelationshipMatrix};

use crate::Common;

/// Comment block written at the top of every output.
#[derive(Debug, Clone)]
pub struct Header {
    lines: Vec<String>,
}

impl Header {
    pub fn new(command: &impl Debug, common: &Common) -> Self {
        let mut lines = vec![
            format!("tcskin {}", tcskin::VERSION),
            format!("seed: {}", common.seed),
            format!("params: {command:?}"),
        ];
        if !common.deterministic {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            lines.push(format!("timestamp: {secs}"));
        }
        Self { lines }
    }

    pub fn with_line(&self, line: String) -> Self {
        let mut lines = self.lines.clone();
        lines.push(line);
        Self { lines }
    }

    pub fn lines(&self) -> Vec<String> {
        self.lines.clone()
    }

    /// Writes the GRM pair plus a `<stem>.grm.info` file holding the header,
    /// since neither half of the pair has room for comments.
    pub fn write_grm<T: Real>(&self, stem: &Path, a: &RelationshipMatrix<T>) -> tcskin::Result<()> {
        write_grm(stem, a)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(with_suffix(stem, ".grm.info"))?);
        write_comments(&mut f, &self.lines)?;
        std::io::Write::flush(&mut f)?;
        Ok(())
    }
}
