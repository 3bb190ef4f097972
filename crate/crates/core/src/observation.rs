//! Cued vertices and the observation model mapping measurements to
//! boundary threat probabilities.

use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub vertex: usize,
    /// Observation time for space-time propagation; `None` applies to all times.
    pub time: Option<f64>,
    /// Measured value. Under the ideal model this is the boundary threat
    /// probability itself; under a likelihood table it is the binary
    /// measurement `z ∈ {0, 1}`.
    pub value: f64,
}

/// Conditional law `f(z | Θ)` of a binary measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodTable {
    /// `f(z = 1 | Θ = 1)`
    pub detect: f64,
    /// `f(z = 1 | Θ = 0)`
    pub false_alarm: f64,
    /// Prior `P(Θ = 1)`.
    pub prior: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum ObservationModel {
    /// `f(z | Θ) = δ_{zΘ}`: the measurement is the threat probability.
    #[default]
    Ideal,
    Likelihood(LikelihoodTable),
}

impl ObservationModel {
    /// Posterior `P(Θ = 1 | z)`.
    pub fn boundary_probability(&self, value: f64) -> Result<f64> {
        match self {
            ObservationModel::Ideal => Ok(value),
            ObservationModel::Likelihood(t) => {
                let z1 = if value == 1.0 {
                    true
                } else if value == 0.0 {
                    false
                } else {
                    return Err(Error::InvalidObservation(format!("measurement {value} is not binary")));
                };
                let (l1, l0) = if z1 { (t.detect, t.false_alarm) } else { (1.0 - t.detect, 1.0 - t.false_alarm) };
                let num = l1 * t.prior;
                let den = num + l0 * (1.0 - t.prior);
                if den <= 0.0 {
                    return Err(Error::InvalidObservation("measurement has zero likelihood".into()));
                }
                Ok(num / den)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    entries: Vec<Observation>,
    model: ObservationModel,
}

impl ObservationSet {
    pub fn new(entries: Vec<Observation>, model: ObservationModel) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidObservation("observation set is empty".into()));
        }
        for o in &entries {
            if !(0.0..=1.0).contains(&o.value) {
                return Err(Error::InvalidObservation(format!("vertex {}: value {} outside [0, 1]", o.vertex, o.value)));
            }
            if let ObservationModel::Likelihood(t) = model {
                for p in [t.detect, t.false_alarm, t.prior] {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::InvalidObservation(format!("likelihood entry {p} outside [0, 1]")));
                    }
                }
            }
        }
        let set = ObservationSet { entries, model };
        set.boundary_values()?;
        Ok(set)
    }

    /// Ideal-model observations at distinct vertices with no times.
    pub fn ideal(pairs: &[(usize, f64)]) -> Result<Self> {
        let entries = pairs.iter().map(|&(vertex, value)| Observation { vertex, time: None, value }).collect();
        let set = Self::new(entries, ObservationModel::Ideal)?;
        set.require_distinct_vertices()?;
        Ok(set)
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn model(&self) -> ObservationModel {
        self.model
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn vertices(&self) -> Vec<usize> {
        self.entries.iter().map(|o| o.vertex).collect()
    }

    /// Boundary threat probabilities, one per entry.
    pub fn boundary_values(&self) -> Result<Vec<f64>> {
        self.entries.iter().map(|o| self.model.boundary_probability(o.value)).collect()
    }

    pub fn require_distinct_vertices(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for o in &self.entries {
            if !seen.insert(o.vertex) {
                return Err(Error::InvalidObservation(format!("vertex {} observed twice", o.vertex)));
            }
        }
        Ok(())
    }

    pub fn check_vertices(&self, order: usize) -> Result<()> {
        match self.entries.iter().find(|o| o.vertex >= order) {
            Some(o) => Err(Error::InvalidObservation(format!("vertex {} out of range", o.vertex))),
            None => Ok(()),
        }
    }

    /// Reads `vertex,p` or `vertex,t,p` CSV, resolving labels through the
    /// graph's symbol table. An empty `t` means "all times".
    pub fn read_csv<R: Read>(reader: R, graph: &Graph, model: ObservationModel) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            vertex: String,
            #[serde(default)]
            t: Option<f64>,
            p: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            let vertex = graph
                .symbols()
                .get(&row.vertex)
                .ok_or_else(|| Error::InvalidObservation(format!("unknown vertex '{}'", row.vertex)))?;
            entries.push(Observation { vertex, time: row.t, value: row.p });
        }
        Self::new(entries, model)
    }
}
