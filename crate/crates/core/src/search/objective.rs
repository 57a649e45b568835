use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::perf::Metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Latency,
    Energy,
    Cost,
    Area,
    Edp,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Latency => "latency",
            Metric::Energy => "energy",
            Metric::Cost => "cost",
            Metric::Area => "area",
            Metric::Edp => "edp",
        }
    }

    pub fn value(self, m: &Metrics) -> f64 {
        match self {
            Metric::Latency => m.latency_cycles,
            Metric::Energy => m.energy_j,
            Metric::Cost => m.cost,
            Metric::Area => m.area_mm2,
            Metric::Edp => m.edp,
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "latency" => Ok(Metric::Latency),
            "energy" => Ok(Metric::Energy),
            "cost" => Ok(Metric::Cost),
            "area" => Ok(Metric::Area),
            "edp" => Ok(Metric::Edp),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Scalar goal steering the surrogate and the annealer. `Pareto(a, b)`
/// minimizes the product `a · b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    Single(Metric),
    Pareto(Metric, Metric),
}

impl Default for Objective {
    fn default() -> Self {
        Objective::Single(Metric::Edp)
    }
}

impl Objective {
    pub fn scalar(&self, m: &Metrics) -> f64 {
        match *self {
            Objective::Single(a) => a.value(m),
            Objective::Pareto(a, b) => a.value(m) * b.value(m),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Single(a) => f.write_str(a.name()),
            Objective::Pareto(a, b) => write!(f, "pareto:({},{})", a.name(), b.name()),
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    /// `edp`, `latency`, `energy`, `cost`, `area` or `pareto:(a,b)`.
    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("pareto:") {
            let inner = rest.trim().trim_start_matches('(').trim_end_matches(')');
            let (a, b) = inner
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("objective `{s}` needs two metrics")))?;
            return Ok(Objective::Pareto(a.parse()?, b.parse()?));
        }
        match s.parse::<Metric>()? {
            Metric::Area => Err(Error::Config(
                "area is only available inside pareto:(a,b)".into(),
            )),
            m => Ok(Objective::Single(m)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for s in ["edp", "latency", "energy", "cost", "pareto:(cost,latency)"] {
            assert_eq!(s.parse::<Objective>().unwrap().to_string(), s);
        }
        assert_eq!(
            "pareto:cost, latency".parse::<Objective>().unwrap(),
            Objective::Pareto(Metric::Cost, Metric::Latency)
        );
        assert!("speed".parse::<Objective>().is_err());
        assert!("pareto:(cost)".parse::<Objective>().is_err());
    }
}
