use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    /// `1 / (1 + t)`
    InverseT,
    /// `1 / sqrt(1 + t)`
    InverseSqrtT,
}

/// A non-increasing sequence `value(t) = max(floor, base · decay(t))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub base: f64,
    pub floor: f64,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, base: f64, floor: f64) -> Result<Self> {
        if !(base.is_finite() && base > 0.0) {
            return Err(Error::param(format!(
                "schedule base must be positive, got {base}"
            )));
        }
        if !(floor.is_finite() && floor >= 0.0) {
            return Err(Error::param(format!(
                "schedule floor must be non-negative, got {floor}"
            )));
        }
        Ok(Schedule { kind, base, floor })
    }

    pub fn constant(base: f64) -> Self {
        Schedule {
            kind: ScheduleKind::Constant,
            base,
            floor: 0.0,
        }
    }

    pub fn value(&self, t: u64) -> f64 {
        let decay = match self.kind {
            ScheduleKind::Constant => 1.0,
            ScheduleKind::InverseT => 1.0 / (1.0 + t as f64),
            ScheduleKind::InverseSqrtT => 1.0 / (1.0 + t as f64).sqrt(),
        };
        (self.base * decay).max(self.floor)
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ScheduleKind::Constant => "constant",
            ScheduleKind::InverseT => "inverse_t",
            ScheduleKind::InverseSqrtT => "inverse_sqrt_t",
        };
        write!(f, "{kind}:{}", self.base)?;
        if self.floor > 0.0 {
            write!(f, ",floor={}", self.floor)?;
        }
        Ok(())
    }
}

/// `kind:base[,floor=x]`, or a bare number for a constant schedule.
impl FromStr for Schedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number '{t}' in schedule '{s}'")))
        };
        if let Ok(v) = s.trim().parse::<f64>() {
            return Schedule::new(ScheduleKind::Constant, v, 0.0);
        }
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected kind:base, got '{s}'")))?;
        let kind = match kind {
            "constant" => ScheduleKind::Constant,
            "inverse_t" => ScheduleKind::InverseT,
            "inverse_sqrt_t" => ScheduleKind::InverseSqrtT,
            other => return Err(Error::Parse(format!("unknown schedule kind '{other}'"))),
        };
        let mut parts = rest.split(',');
        let base = num(parts.next().unwrap_or(""))?;
        let mut floor = 0.0;
        for p in parts {
            match p.split_once('=') {
                Some(("floor", v)) => floor = num(v)?,
                _ => return Err(Error::Parse(format!("unknown schedule option '{p}'"))),
            }
        }
        Schedule::new(kind, base, floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_forms() {
        assert_eq!(
            "0.01".parse::<Schedule>().unwrap(),
            Schedule::constant(0.01)
        );
        let s: Schedule = "inverse_t:0.5,floor=0.01".parse().unwrap();
        assert_eq!(s.value(0), 0.5);
        assert_eq!(s.value(1), 0.25);
        assert_eq!(s.value(1000), 0.01);
        assert_eq!(s.to_string(), "inverse_t:0.5,floor=0.01");
        assert!("linear:1".parse::<Schedule>().is_err());
        assert!("constant:-1".parse::<Schedule>().is_err());
    }

    proptest! {
        #[test]
        fn schedules_never_increase(base in 1e-4f64..10.0, floor in 0.0f64..1.0, t in 0u64..1_000_000, k in 0usize..3) {
            let kind = [ScheduleKind::Constant, ScheduleKind::InverseT, ScheduleKind::InverseSqrtT][k];
            let s = Schedule::new(kind, base, floor).unwrap();
            prop_assert!(s.value(t + 1) <= s.value(t));
            prop_assert!(s.value(t) >= floor);
        }
    }
}
