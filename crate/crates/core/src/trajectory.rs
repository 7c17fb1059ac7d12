use std::io::Write;

use serde::{Deserialize, Serialize};

/// Time series of a state vector with optional derived scalar series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub state_names: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub series: Vec<(String, Vec<f64>)>,
}

impl Trajectory {
    pub fn new<S: AsRef<str>>(state_names: &[S]) -> Self {
        Self {
            state_names: state_names.iter().map(|s| s.as_ref().to_string()).collect(),
            times: Vec::new(),
            states: Vec::new(),
            series: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, state: Vec<f64>) {
        debug_assert_eq!(state.len(), self.state_names.len());
        self.times.push(t);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    /// Values of state coordinate `i` over time.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[i]).collect()
    }

    pub fn add_series(&mut self, name: &str, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.times.len());
        self.series.push((name.to_string(), values));
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// CSV with columns `t, state..., series...`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.state_names.iter().cloned());
        header.extend(self.series.iter().map(|(n, _)| n.clone()));
        wr.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(self.states[i].iter().map(f64::to_string));
            row.extend(self.series.iter().map(|(_, v)| v[i].to_string()));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}
