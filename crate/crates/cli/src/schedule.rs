//! Rank lists for sweeps.

use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RankSchedule {
    Explicit(Vec<usize>),
    /// Every rank up to 15, then 25 log-spaced ranks up to `min(p,s)`.
    Spice,
    /// 20 ranks spread over 1..=49, then 5 log-spaced ranks from 50 up to `min(p,s)`.
    Pautomac,
}

impl FromStr for RankSchedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "spice" => Ok(RankSchedule::Spice),
            "pautomac" => Ok(RankSchedule::Pautomac),
            list => {
                let ranks: Vec<usize> = list
                    .split(',')
                    .map(|t| t.trim().parse().map_err(|_| format!("invalid rank {t:?}")))
                    .collect::<Result<_, _>>()?;
                Ok(RankSchedule::Explicit(ranks))
            }
        }
    }
}

/// `count` integers spread logarithmically over `[lo, hi]`, strictly
/// increasing while room allows.
fn log_spaced(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if lo > hi || count == 0 {
        return Vec::new();
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = Vec::with_capacity(count);
    for i in 0..count {
        let t = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
        let mut r = (a + t * (b - a)).exp().round() as usize;
        if let Some(&last) = out.last() {
            r = r.max(last + 1);
        }
        if r > hi {
            break;
        }
        out.push(r);
    }
    out
}

impl RankSchedule {
    /// Sorted distinct ranks in `1..=max_rank`.
    pub fn ranks(&self, max_rank: usize) -> Vec<usize> {
        let mut out: Vec<usize> = match self {
            RankSchedule::Explicit(r) => r.clone(),
            RankSchedule::Spice => {
                let mut r: Vec<usize> = (1..=15).collect();
                r.extend(log_spaced(16, max_rank, 25));
                r
            }
            RankSchedule::Pautomac => {
                let mut r: Vec<usize> = (0..20).map(|i| 1 + (i * 48 + 9) / 19).collect();
                r.extend(log_spaced(50, max_rank, 5));
                r
            }
        };
        out.retain(|&r| r >= 1 && r <= max_rank);
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spice_schedule_at_1000() {
        let r = RankSchedule::Spice.ranks(1000);
        assert_eq!(r.len(), 40);
        assert_eq!(&r[..15], &(1..=15).collect::<Vec<_>>()[..]);
        assert_eq!(*r.last().unwrap(), 1000);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn pautomac_schedule() {
        let r = RankSchedule::Pautomac.ranks(500);
        assert_eq!(r.len(), 25);
        assert_eq!(r.iter().filter(|&&x| x < 50).count(), 20);
        assert_eq!((r[0], r[19]), (1, 49));
        assert_eq!(*r.last().unwrap(), 500);
        assert!(RankSchedule::Pautomac.ranks(30).iter().all(|&x| x <= 30));
    }

    #[test]
    fn explicit_lists_are_filtered() {
        let s: RankSchedule = "4, 1,2,4,9".parse().unwrap();
        assert_eq!(s.ranks(5), vec![1, 2, 4]);
        assert!("1,x".parse::<RankSchedule>().is_err());
        assert_eq!(RankSchedule::Spice.ranks(7), (1..=7).collect::<Vec<_>>());
    }
}
