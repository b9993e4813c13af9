use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Realized per-round returns, one equal-length series per client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnHistory {
    series: Vec<Vec<f64>>,
}

impl ReturnHistory {
    /// Builds a history from client-major series (`series[client][round]`).
    pub fn new(series: Vec<Vec<f64>>) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::InvalidInput("history has no clients".into()));
        }
        let len = series[0].len();
        for (client, s) in series.iter().enumerate() {
            if s.len() != len {
                return Err(Error::InvalidInput(format!(
                    "client {client} has {} rounds, expected {len}",
                    s.len()
                )));
            }
            if let Some(round) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite return for client {client} at round {round}"
                )));
            }
        }
        Ok(Self { series })
    }

    /// Builds a history from round-major rows (`rows[round][client]`).
    pub fn from_rounds(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        let mut series = vec![Vec::with_capacity(rows.len()); n];
        for (round, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!(
                    "round {round} has {} clients, expected {n}",
                    row.len()
                )));
            }
            for (s, &v) in series.iter_mut().zip(row) {
                s.push(v);
            }
        }
        Self::new(series)
    }

    pub fn n_clients(&self) -> usize {
        self.series.len()
    }

    /// Number of rounds `T`.
    pub fn len(&self) -> usize {
        self.series[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn client(&self, i: usize) -> &[f64] {
        &self.series[i]
    }

    pub fn series(&self) -> &[Vec<f64>] {
        &self.series
    }
}
