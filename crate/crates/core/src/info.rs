//! Entropy bookkeeping shared by the oracles.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = KahanSum::default();
        for x in iter {
            k.add(x);
        }
        k
    }
}

/// `-p log2 p`, with `0 log 0 = 0`.
pub fn neg_p_log2_p(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Shannon entropy in bits of the empirical distribution given by `counts`.
pub fn entropy_of_counts(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts
        .iter()
        .map(|&c| neg_p_log2_p(c as f64 / t))
        .collect::<KahanSum>()
        .value()
}

/// Binary entropy function.
pub fn binary_entropy(p: f64) -> f64 {
    neg_p_log2_p(p) + neg_p_log2_p(1.0 - p)
}
