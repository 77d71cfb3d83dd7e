use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the training-set size `N` grows with the observation count `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NRule {
    #[serde(rename = "n")]
    Linear,
    #[serde(rename = "nlogn")]
    NLogN,
    #[serde(rename = "n1.5")]
    ThreeHalves,
    #[serde(rename = "n2")]
    Square,
}

impl NRule {
    pub const ALL: [NRule; 4] = [NRule::Linear, NRule::NLogN, NRule::ThreeHalves, NRule::Square];

    pub fn as_str(self) -> &'static str {
        match self {
            NRule::Linear => "n",
            NRule::NLogN => "nlogn",
            NRule::ThreeHalves => "n1.5",
            NRule::Square => "n2",
        }
    }

    /// Position in increasing order of growth.
    pub fn index(self) -> usize {
        NRule::ALL.iter().position(|&r| r == self).unwrap()
    }
}

impl fmt::Display for NRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NRule::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::UnknownId { kind: "N-rule", value: s.to_string() })
    }
}

/// Training-set size for `n` observations; non-integer sizes round up.
pub fn n_schedule(n: usize, rule: NRule) -> Result<usize> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("schedules need n >= 2, got {n}")));
    }
    let overflow = || Error::InvalidParameter(format!("training size for n = {n} under rule {rule} overflows"));
    Ok(match rule {
        NRule::Linear => n,
        NRule::NLogN => (n as f64 * (n as f64).ln()).ceil() as usize,
        NRule::ThreeHalves => {
            // smallest N with N^2 >= n^3
            let cube = (n as u128).checked_pow(3).ok_or_else(overflow)?;
            let mut m = (cube as f64).sqrt() as u128;
            while m * m < cube {
                m += 1;
            }
            while m > 0 && (m - 1) * (m - 1) >= cube {
                m -= 1;
            }
            usize::try_from(m).map_err(|_| overflow())?
        }
        NRule::Square => n.checked_mul(n).ok_or_else(overflow)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred() {
        let got: Vec<usize> = NRule::ALL.iter().map(|&r| n_schedule(100, r).unwrap()).collect();
        assert_eq!(got, vec![100, 461, 1000, 10_000]);
    }

    #[test]
    fn edges() {
        assert_eq!(n_schedule(1000, NRule::Square).unwrap(), 1_000_000);
        assert_eq!(n_schedule(2, NRule::NLogN).unwrap(), 2);
        assert_eq!(n_schedule(5000, NRule::ThreeHalves).unwrap(), 353_554);
        assert_eq!(n_schedule(2, NRule::ThreeHalves).unwrap(), 3);
        assert!(n_schedule(1, NRule::Linear).is_err());
        assert!("n3".parse::<NRule>().is_err());
        assert_eq!("n1.5".parse::<NRule>().unwrap(), NRule::ThreeHalves);
    }
}
