//! Decision datasets in long CSV form: `round,actor,site,colour,value`,
//! zero-based indices, one row per cell.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LongRow {
    round: usize,
    actor: usize,
    site: usize,
    colour: usize,
    value: f64,
}

/// Interests per round, each actors × sites × colours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionDataset {
    pub rounds: Vec<Tensor3>,
}

impl DecisionDataset {
    /// `(rounds, actors, sites, colours)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let (m, n, o) = self.rounds.first().map(Tensor3::dims).unwrap_or((0, 0, 0));
        (self.rounds.len(), m, n, o)
    }
}

/// Reads a complete, duplicate-free long table. Dimensions are inferred from
/// the largest index on each axis.
pub fn read_decisions_csv(reader: impl Read) -> Result<DecisionDataset, EngineError> {
    let err = |msg: String| EngineError::Ingest(msg);
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let rows: Vec<LongRow> = csv
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| err(e.to_string()))?;
    if rows.is_empty() {
        return Err(err("no rows".into()));
    }
    let extent = |f: fn(&LongRow) -> usize| rows.iter().map(f).max().unwrap_or(0) + 1;
    let (tau, m, n, o) = (extent(|r| r.round), extent(|r| r.actor), extent(|r| r.site), extent(|r| r.colour));
    let expected = tau * m * n * o;
    if rows.len() != expected {
        return Err(err(format!("{} rows for a complete {tau}x{m}x{n}x{o} table", rows.len())));
    }
    let mut values = vec![None; expected];
    for r in &rows {
        if !r.value.is_finite() || r.value < 0.0 {
            return Err(err(format!("bad value {} at {:?}", r.value, (r.round, r.actor, r.site, r.colour))));
        }
        let idx = ((r.round * m + r.actor) * n + r.site) * o + r.colour;
        if values[idx].replace(r.value).is_some() {
            return Err(err(format!("duplicate cell {:?}", (r.round, r.actor, r.site, r.colour))));
        }
    }
    let rounds = (0..tau)
        .map(|t| Tensor3::from_fn(m, n, o, |i, j, k| values[((t * m + i) * n + j) * o + k].expect("complete")))
        .collect();
    Ok(DecisionDataset { rounds })
}

pub fn write_decisions_csv(dataset: &DecisionDataset, writer: impl Write) -> Result<(), EngineError> {
    let io = |e: csv::Error| EngineError::Io(e.to_string());
    let mut csv = csv::Writer::from_writer(writer);
    for (round, x) in dataset.rounds.iter().enumerate() {
        let (m, n, o) = x.dims();
        for actor in 0..m {
            for site in 0..n {
                for colour in 0..o {
                    csv.serialize(LongRow {
                        round,
                        actor,
                        site,
                        colour,
                        value: x[(actor, site, colour)],
                    })
                    .map_err(io)?;
                }
            }
        }
    }
    csv.flush().map_err(|e| EngineError::Io(e.to_string()))
}
