//! Trajectory CSV: `t,<states>,<outputs>,z,zhat,err,xi1..xiv`.
//!
//! Floats are written with the shortest round-tripping representation, so
//! reading a written file reproduces every value bit for bit.

use std::fmt::Write as _;

use super::Trajectory;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("empty file")]
    Empty,
    #[error("header: {0}")]
    Header(String),
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
}

impl Trajectory {
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(self.states.iter().cloned());
        h.extend(self.outputs.iter().cloned());
        h.extend(["z", "zhat", "err"].map(String::from));
        let v = self.xi.first().map_or(0, Vec::len);
        h.extend((1..=v).map(|k| format!("xi{k}")));
        h
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.csv_header().join(",");
        s.push('\n');
        for k in 0..self.len() {
            let _ = write!(s, "{:?}", self.t[k]);
            let row = self.x[k]
                .iter()
                .chain(&self.y[k])
                .chain([&self.z[k], &self.zhat[k], &self.err[k]])
                .chain(&self.xi[k]);
            for v in row {
                let _ = write!(s, ",{v:?}");
            }
            s.push('\n');
        }
        s
    }

    /// Inverse of [`Trajectory::to_csv`]; `n_states` separates states from
    /// outputs in the header.
    pub fn from_csv(text: &str, n_states: usize) -> Result<Trajectory, CsvError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or(CsvError::Empty)?.split(',').map(str::trim).collect();
        let z_at = header
            .iter()
            .position(|c| *c == "z")
            .ok_or_else(|| CsvError::Header("no `z` column".into()))?;
        if header.first() != Some(&"t") || z_at < 1 + n_states || header.get(z_at + 1..z_at + 3) != Some(&["zhat", "err"][..]) {
            return Err(CsvError::Header(header.join(",")));
        }
        let p = z_at - 1 - n_states;
        let v = header.len() - z_at - 3;
        let mut tr = Trajectory {
            states: header[1..1 + n_states].iter().map(|s| s.to_string()).collect(),
            outputs: header[1 + n_states..z_at].iter().map(|s| s.to_string()).collect(),
            t: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
            z: Vec::new(),
            zhat: Vec::new(),
            err: Vec::new(),
            xi: Vec::new(),
        };
        for (row, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CsvError::Row { row: row + 1, msg: e.to_string() })?;
            if vals.len() != header.len() {
                return Err(CsvError::Row {
                    row: row + 1,
                    msg: format!("{} fields, header has {}", vals.len(), header.len()),
                });
            }
            tr.t.push(vals[0]);
            tr.x.push(vals[1..1 + n_states].to_vec());
            tr.y.push(vals[1 + n_states..1 + n_states + p].to_vec());
            tr.z.push(vals[z_at]);
            tr.zhat.push(vals[z_at + 1]);
            tr.err.push(vals[z_at + 2]);
            tr.xi.push(vals[z_at + 3..z_at + 3 + v].to_vec());
        }
        Ok(tr)
    }
}
