//! One-sided test of `rho1 <= e^eps * rho2` from two binomial counts.
//!
//! Thinning each of the `c1` hits with probability `e^-eps` turns the
//! ratio null into an ordinary equal-proportion null, which Fisher's exact
//! test handles. The thinned count is random; averaging the p-value over
//! evenly spaced quantiles of its binomial law keeps the result a
//! deterministic function of the counts.

use statrs::function::factorial::ln_binomial;

use super::TesterError;

/// Number of thinning quantiles averaged into one p-value.
pub const THINNINGS: usize = 20;

/// p-value for "the event is at most `e^eps` times likelier on side 1".
pub fn hypothesis_test(c1: u64, c2: u64, n: u64, eps: f64) -> Result<f64, TesterError> {
    if n == 0 {
        return Err(TesterError::NoTrials);
    }
    if c1 > n || c2 > n {
        return Err(TesterError::CountExceedsTrials { count: c1.max(c2), trials: n });
    }
    let thinned = binomial_quantiles(c1, (-eps).exp(), THINNINGS);
    let total: f64 = thinned.iter().map(|&k| fisher_upper(k, c2, n)).sum();
    Ok((total / THINNINGS as f64).clamp(0.0, 1.0))
}

/// Fisher's one-sided p-value on the table `[[a, n-a], [b, n-b]]`: the
/// chance that side 1 holds at least `a` of the `a + b` hits.
pub fn fisher_upper(a: u64, b: u64, n: u64) -> f64 {
    hypergeometric_sf(2 * n, a + b, n, a)
}

/// `P[X >= x]` for `X` counting successes in `draws` draws without
/// replacement from `population` items of which `successes` are marked.
pub fn hypergeometric_sf(population: u64, successes: u64, draws: u64, x: u64) -> f64 {
    let lo = (draws + successes).saturating_sub(population);
    let hi = successes.min(draws);
    if x <= lo {
        return 1.0;
    }
    if x > hi {
        return 0.0;
    }
    let failures = population - successes;
    let ln_total = ln_binomial(population, draws);
    let ln_pmf = |k: u64| ln_binomial(successes, k) + ln_binomial(failures, draws - k) - ln_total;
    let mode = ((draws + 1) as f64 * (successes + 1) as f64 / (population + 2) as f64).floor() as u64;
    if x > mode {
        // Terms decrease from x upward.
        let mut term = ln_pmf(x).exp();
        let mut sum = term;
        let mut k = x;
        while k < hi && term > sum * 1e-17 {
            let ratio = ((successes - k) as f64 * (draws - k) as f64)
                / ((k + 1) as f64 * (failures + k + 1 - draws) as f64);
            term *= ratio;
            sum += term;
            k += 1;
        }
        sum.min(1.0)
    } else {
        // Complement of the lower tail, summed downward from x - 1.
        let mut k = x - 1;
        let mut term = ln_pmf(k).exp();
        let mut sum = term;
        while k > lo && term > sum * 1e-17 {
            let ratio = (k as f64 * (failures + k - draws) as f64)
                / ((successes - k + 1) as f64 * (draws - k + 1) as f64);
            term *= ratio;
            sum += term;
            k -= 1;
        }
        (1.0 - sum).clamp(0.0, 1.0)
    }
}

/// Quantiles of Binomial(`trials`, `p`) at the midpoints `(j + 1/2) / count`.
pub fn binomial_quantiles(trials: u64, p: f64, count: usize) -> Vec<u64> {
    if trials == 0 || p <= 0.0 {
        return vec![0; count];
    }
    if p >= 1.0 {
        return vec![trials; count];
    }
    let (lo, pmf) = binomial_window(trials, p);
    let total: f64 = pmf.iter().sum();
    let mut out = Vec::with_capacity(count);
    let mut acc = 0.0;
    let mut idx = 0;
    for j in 0..count {
        let u = (j as f64 + 0.5) / count as f64 * total;
        while idx + 1 < pmf.len() && acc + pmf[idx] < u {
            acc += pmf[idx];
            idx += 1;
        }
        out.push(lo + idx as u64);
    }
    out
}

/// Binomial pmf over the range holding all but a negligible mass, as
/// `(first value, probabilities)`.
fn binomial_window(trials: u64, p: f64) -> (u64, Vec<f64>) {
    let q = 1.0 - p;
    let mode = (((trials + 1) as f64) * p).floor().min(trials as f64) as u64;
    let ln_mode = ln_binomial(trials, mode) + mode as f64 * p.ln() + (trials - mode) as f64 * q.ln();
    let peak = ln_mode.exp();
    let cutoff = peak * 1e-18;
    let mut below = Vec::new();
    let mut term = peak;
    let mut k = mode;
    while k > 0 {
        term *= k as f64 / (trials - k + 1) as f64 * q / p;
        if term < cutoff {
            break;
        }
        below.push(term);
        k -= 1;
    }
    let lo = mode - below.len() as u64;
    let mut pmf: Vec<f64> = below.into_iter().rev().collect();
    pmf.push(peak);
    let mut term = peak;
    let mut k = mode;
    while k < trials {
        term *= (trials - k) as f64 / (k + 1) as f64 * p / q;
        if term < cutoff {
            break;
        }
        pmf.push(term);
        k += 1;
    }
    (lo, pmf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Binomial, DiscreteCDF, Hypergeometric};

    #[test]
    fn hypergeometric_tail_matches_reference() {
        for &(pop, succ, draws) in &[(40u64, 12u64, 20u64), (200, 150, 100), (2000, 37, 1000), (20000, 9000, 10000)] {
            let h = Hypergeometric::new(pop, succ, draws).unwrap();
            let lo = (draws + succ).saturating_sub(pop);
            let hi = succ.min(draws);
            for x in lo..=hi + 1 {
                let reference = if x == 0 { 1.0 } else { h.sf(x - 1) };
                let ours = hypergeometric_sf(pop, succ, draws, x);
                assert!((ours - reference).abs() < 1e-9, "{pop} {succ} {draws} {x}: {ours} vs {reference}");
            }
        }
    }

    #[test]
    fn binomial_quantiles_match_inverse_cdf() {
        for &(n, p) in &[(1u64, 0.5), (10, 0.3), (500, 0.9048), (20000, 0.6065), (7, 0.999)] {
            let b = Binomial::new(p, n).unwrap();
            let ours = binomial_quantiles(n, p, THINNINGS);
            for (j, &k) in ours.iter().enumerate() {
                let u = (j as f64 + 0.5) / THINNINGS as f64;
                // smallest k with cdf(k) >= u
                let reference = (0..=n).find(|&k| b.cdf(k) >= u - 1e-12).unwrap();
                assert!(k.abs_diff(reference) <= 1, "n={n} p={p} u={u}: {k} vs {reference}");
            }
        }
    }

    #[test]
    fn equal_counts_do_not_reject() {
        assert!(hypothesis_test(500, 500, 1000, 0.5).unwrap() > 0.05);
    }

    #[test]
    fn large_gap_rejects_strongly() {
        assert!(hypothesis_test(900, 100, 1000, 0.1).unwrap() < 1e-6);
    }

    #[test]
    fn direct_average_over_thinnings() {
        // Recompute the 900/100 case by brute force: exact binomial quantiles
        // from cumulative sums, then the hypergeometric tail via statrs.
        let (c1, c2, n, eps) = (900u64, 100u64, 1000u64, 0.1f64);
        let b = Binomial::new((-eps).exp(), c1).unwrap();
        let mut total = 0.0;
        for j in 0..THINNINGS {
            let u = (j as f64 + 0.5) / THINNINGS as f64;
            let k = (0..=c1).find(|&k| b.cdf(k) >= u).unwrap();
            let h = Hypergeometric::new(2 * n, k + c2, n).unwrap();
            total += h.sf(k - 1);
        }
        let reference = total / THINNINGS as f64;
        let ours = hypothesis_test(c1, c2, n, eps).unwrap();
        assert!(reference < 1e-6);
        assert!((ours - reference).abs() <= 1e-3 * reference.max(1e-300) + 1e-300, "{ours} vs {reference}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(hypothesis_test(1, 1, 0, 0.5), Err(TesterError::NoTrials)));
        assert!(hypothesis_test(11, 1, 10, 0.5).is_err());
    }

    #[test]
    fn zero_counts() {
        assert!((hypothesis_test(0, 0, 100, 0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!((hypothesis_test(0, 50, 100, 0.5).unwrap() - 1.0).abs() < 1e-12);
    }
}
