use std::f64::consts::PI;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Generator, UnitPointSet};
use crate::error::{Error, Result};

/// Tabulated two-dimensional Fibonacci lattices `(n, h)`; the generating
/// vector is `(1, h)` with `h` the preceding Fibonacci number.
pub const FIBONACCI_LATTICES: [(usize, usize); 5] = [(89, 55), (144, 89), (233, 144), (377, 233), (610, 377)];

const MAX_KOROBOV_COUNT: usize = 4096;
const MAX_KOROBOV_DIMENSION: usize = 5;
const MAX_HALTON_DIMENSION: usize = 50;

fn fibonacci_predecessor(n: usize) -> Option<usize> {
    if let Some(&(_, h)) = FIBONACCI_LATTICES.iter().find(|(m, _)| *m == n) {
        return Some(h);
    }
    let (mut a, mut b) = (1usize, 2usize);
    while b < n {
        (a, b) = (b, a + b);
    }
    (b == n && n >= 3).then_some(a)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Periodic `P_2` lattice figure of merit; smaller is better.
fn p2_criterion(n: usize, h: &[usize]) -> f64 {
    let c = 2.0 * PI * PI;
    let sum: f64 = (1..=n)
        .map(|i| {
            h.iter()
                .map(|&hj| {
                    let x = ((i * hj) % n) as f64 / n as f64;
                    1.0 + c * (x * x - x + 1.0 / 6.0)
                })
                .product::<f64>()
        })
        .sum();
    sum / n as f64 - 1.0
}

fn korobov_vector(n: usize, a: usize, q: usize) -> Vec<usize> {
    let mut h = Vec::with_capacity(q);
    let mut v = 1 % n;
    for _ in 0..q {
        h.push(v);
        v = (v * a) % n;
    }
    h
}

/// Generating vector used for an `(n, q)` good lattice point set, if one is
/// available: a Fibonacci lattice when `q = 2` and `n` is a Fibonacci number,
/// otherwise the Korobov vector `(1, a, a², …) mod n` minimizing `P_2`.
pub fn glp_generating_vector(count: usize, dimension: usize) -> Option<Vec<usize>> {
    if count < 2 || dimension == 0 {
        return None;
    }
    if dimension == 1 {
        return Some(vec![1]);
    }
    if dimension == 2 {
        if let Some(h) = fibonacci_predecessor(count) {
            return Some(vec![1, h]);
        }
    }
    if dimension > MAX_KOROBOV_DIMENSION || count > MAX_KOROBOV_COUNT {
        return None;
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for a in 2..count {
        if gcd(a, count) != 1 {
            continue;
        }
        let h = korobov_vector(count, a, dimension);
        let score = p2_criterion(count, &h);
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, h));
        }
    }
    best.map(|(_, h)| h)
        .or_else(|| Some(korobov_vector(count, 1, dimension)))
}

fn lattice(count: usize, h: &[usize]) -> UnitPointSet {
    let points = (1..=count)
        .map(|i| h.iter().map(|&hj| ((i * hj) % count) as f64 / count as f64).collect())
        .collect();
    UnitPointSet {
        points,
        generator: Generator::Glp,
    }
}

/// Good lattice point set `x_i = ({i h_1 / n}, …, {i h_q / n})`, `i = 1..=n`.
///
/// Returns a Halton set instead, with a logged warning, when no generating
/// vector is available for `(count, dimension)`.
pub fn generate_glp(count: usize, dimension: usize) -> Result<UnitPointSet> {
    match generate_glp_strict(count, dimension) {
        Err(Error::UnsupportedDimension { .. }) => {
            warn!("no GLP generating vector for n = {count}, q = {dimension}; using Halton points");
            generate_halton(count, dimension, 0)
        }
        other => other,
    }
}

/// Like [`generate_glp`] but fails rather than falling back.
pub fn generate_glp_strict(count: usize, dimension: usize) -> Result<UnitPointSet> {
    if count < 2 {
        return Err(Error::invalid(
            "count",
            format!("GLP sets need at least 2 points, got {count}"),
        ));
    }
    if dimension == 0 {
        return Err(Error::invalid("dimension", "must be at least 1"));
    }
    let h = glp_generating_vector(count, dimension).ok_or(Error::UnsupportedDimension { count, dimension })?;
    Ok(lattice(count, &h))
}

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut value = 0.0;
    while index > 0 {
        value += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    value
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes
            .iter()
            .take_while(|&&p| p * p <= candidate)
            .all(|&p| !candidate.is_multiple_of(p))
        {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Halton points with the first `dimension` primes as bases. The sequence
/// index starts at `skip + 1`, so the origin is never produced.
pub fn generate_halton(count: usize, dimension: usize, skip: usize) -> Result<UnitPointSet> {
    if count == 0 {
        return Err(Error::invalid("count", "must be at least 1"));
    }
    if dimension == 0 || dimension > MAX_HALTON_DIMENSION {
        return Err(Error::invalid(
            "dimension",
            format!("Halton points support 1..={MAX_HALTON_DIMENSION} dimensions, got {dimension}"),
        ));
    }
    let bases = first_primes(dimension);
    let points = (0..count)
        .map(|i| {
            let index = (skip + i + 1) as u64;
            bases.iter().map(|&b| radical_inverse(index, b)).collect()
        })
        .collect();
    Ok(UnitPointSet {
        points,
        generator: Generator::Halton,
    })
}

/// Independent uniform points from a seeded ChaCha stream.
pub fn generate_random(count: usize, dimension: usize, seed: u64) -> Result<UnitPointSet> {
    if count == 0 || dimension == 0 {
        return Err(Error::invalid("count", "count and dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count)
        .map(|_| (0..dimension).map(|_| rng.random::<f64>()).collect())
        .collect();
    Ok(UnitPointSet {
        points,
        generator: Generator::Random,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::HashSet;

    fn distinct(set: &UnitPointSet) -> bool {
        let keys: HashSet<Vec<u64>> = set
            .points
            .iter()
            .map(|p| p.iter().map(|x| x.to_bits()).collect())
            .collect();
        keys.len() == set.len()
    }

    #[test]
    fn glp_89_points() {
        let set = generate_glp(89, 2).unwrap();
        assert_eq!(set.len(), 89);
        assert!(distinct(&set));
        assert!(set.points.iter().flatten().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn fibonacci_144_first_point() {
        assert_eq!(glp_generating_vector(144, 2).unwrap(), vec![1, 89]);
        let set = generate_glp(144, 2).unwrap();
        assert_relative_eq!(set.points[0][0], 1.0 / 144.0, epsilon = 1e-15);
        assert_relative_eq!(set.points[0][1], 89.0 / 144.0, epsilon = 1e-15);
        assert_relative_eq!(set.points[0][1], 0.618055555, epsilon = 1e-8);
    }

    #[test]
    fn glp_rejects_single_point() {
        assert!(generate_glp(1, 2).is_err());
    }

    #[test]
    fn strict_glp_reports_unsupported_dimension() {
        assert!(matches!(
            generate_glp_strict(100, 8),
            Err(Error::UnsupportedDimension {
                count: 100,
                dimension: 8
            })
        ));
        let fallback = generate_glp(100, 8).unwrap();
        assert_eq!(fallback.generator, Generator::Halton);
    }

    #[test]
    fn korobov_lattice_in_three_dimensions_is_distinct() {
        let set = generate_glp(101, 3).unwrap();
        assert_eq!(set.generator, Generator::Glp);
        assert!(distinct(&set));
    }

    #[test]
    fn halton_examples() {
        let s = generate_halton(3, 1, 0).unwrap();
        assert_eq!(s.points, vec![vec![0.5], vec![0.25], vec![0.75]]);
        let s = generate_halton(1, 2, 0).unwrap();
        assert_relative_eq!(s.points[0][0], 0.5);
        assert_relative_eq!(s.points[0][1], 1.0 / 3.0, epsilon = 1e-15);
        assert!(generate_halton(0, 2, 0).is_err());
        assert!(generate_halton(5, 51, 0).is_err());
    }

    #[test]
    fn halton_skip_offsets_the_sequence() {
        let full = generate_halton(10, 3, 0).unwrap();
        let tail = generate_halton(4, 3, 6).unwrap();
        assert_eq!(&full.points[6..], &tail.points[..]);
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(generate_glp(233, 2).unwrap(), generate_glp(233, 2).unwrap());
        assert_eq!(generate_random(50, 3, 9).unwrap(), generate_random(50, 3, 9).unwrap());
        assert_ne!(generate_random(50, 3, 9).unwrap(), generate_random(50, 3, 10).unwrap());
    }

    #[test]
    fn centered_set_stays_in_open_cube() {
        let set = generate_glp(89, 2).unwrap().centered();
        assert!(set.points.iter().flatten().all(|&x| x > 0.0 && x < 1.0));
        assert!(distinct(&set));
    }
}
