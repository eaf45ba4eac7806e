//! Small special-function kit: factorials, Hermite polynomials and
//! Poisson tails. Everything here is evaluated in plain `f64`.

/// Table of `n!` for `n = 0..=max`.
#[derive(Debug, Clone)]
pub struct FactorialTable {
    values: Vec<f64>,
}

impl FactorialTable {
    pub fn new(max: usize) -> Self {
        let mut values = Vec::with_capacity(max + 1);
        let mut acc = 1.0;
        values.push(acc);
        for k in 1..=max {
            acc *= k as f64;
            values.push(acc);
        }
        FactorialTable { values }
    }

    /// `n!`, extending past the table on demand.
    pub fn get(&self, n: usize) -> f64 {
        match self.values.get(n) {
            Some(v) => *v,
            None => {
                let last = self.values.len() - 1;
                (last + 1..=n).fold(self.values[last], |acc, k| acc * k as f64)
            }
        }
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Physicists' Hermite polynomial `H_n(x)` via the three-term recurrence
/// `H_{k+1} = 2x H_k - 2k H_{k-1}`.
pub fn hermite(n: usize, x: f64) -> f64 {
    let mut h_prev = 1.0;
    if n == 0 {
        return h_prev;
    }
    let mut h = 2.0 * x;
    for k in 1..n {
        let next = 2.0 * x * h - 2.0 * k as f64 * h_prev;
        h_prev = h;
        h = next;
    }
    h
}

/// Poisson probability mass `e^{-λ} λ^k / k!`.
pub fn poisson_pmf(k: usize, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    // log-space keeps large k and λ from overflowing
    let log_p = -lambda + k as f64 * lambda.ln() - ln_factorial(k);
    log_p.exp()
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|j| (j as f64).ln()).sum()
}

/// Upper tail `P(N > k)` for `N ~ Poisson(λ)`, accurate for tiny λ.
pub fn poisson_upper_tail(k: usize, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if lambda < (k + 1) as f64 {
        // terms decrease from j = k+1 onwards
        let mut term = poisson_pmf(k + 1, lambda);
        let mut sum = 0.0;
        let mut j = k + 1;
        while term > 0.0 {
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            j += 1;
            term *= lambda / j as f64;
        }
        sum
    } else {
        let cdf: f64 = (0..=k).map(|j| poisson_pmf(j, lambda)).sum();
        (1.0 - cdf).max(0.0)
    }
}
