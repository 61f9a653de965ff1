//! Variation and replacement operators shared by plain and clustering DE.

use rand::seq::index::sample;
use rand::Rng;

use super::Population;

/// Reflects `x` back into `[lo, hi]`, folding repeatedly for far excursions.
pub fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    if width <= 0.0 || !x.is_finite() {
        return if x.is_finite() { lo } else { lo + 0.5 * width };
    }
    if (lo..=hi).contains(&x) {
        return x;
    }
    let mut t = (x - lo).rem_euclid(2.0 * width);
    if t > width {
        t = 2.0 * width - t;
    }
    (lo + t).clamp(lo, hi)
}

pub fn reflect_into(v: &mut [f64], bounds: &[(f64, f64)]) {
    for (x, &(lo, hi)) in v.iter_mut().zip(bounds) {
        *x = reflect(*x, lo, hi);
    }
}

/// `base + f * (a - b)`, before bound handling.
pub fn difference_vector(base: &[f64], a: &[f64], b: &[f64], f: f64) -> Vec<f64> {
    base.iter()
        .zip(a.iter().zip(b))
        .map(|(x, (p, q))| x + f * (p - q))
        .collect()
}

/// Three mutually distinct indices in `0..n`, all different from `i`.
pub fn distinct_indices<R: Rng + ?Sized>(n: usize, i: usize, rng: &mut R) -> [usize; 3] {
    assert!(n >= 4, "rand/1 mutation needs at least four members");
    let picks = sample(rng, n - 1, 3);
    let shift = |j: usize| if j >= i { j + 1 } else { j };
    [shift(picks.index(0)), shift(picks.index(1)), shift(picks.index(2))]
}

/// `x_r1 + F (x_r2 - x_r3)` with distinct `r1, r2, r3 != i`, reflected into
/// `bounds`.
pub fn rand1_mutation<R: Rng + ?Sized>(
    members: &[Vec<f64>],
    i: usize,
    f: f64,
    bounds: &[(f64, f64)],
    rng: &mut R,
) -> Vec<f64> {
    let [r1, r2, r3] = distinct_indices(members.len(), i, rng);
    let mut v = difference_vector(&members[r1], &members[r2], &members[r3], f);
    reflect_into(&mut v, bounds);
    v
}

/// Takes each mutant gene with probability `cr`, and always the gene at a
/// uniformly drawn `j_rand`.
pub fn binomial_crossover<R: Rng + ?Sized>(target: &[f64], mutant: &[f64], cr: f64, rng: &mut R) -> Vec<f64> {
    let j_rand = rng.random_range(0..target.len());
    target
        .iter()
        .zip(mutant)
        .enumerate()
        .map(
            |(j, (&t, &m))| {
                if j == j_rand || rng.random::<f64>() < cr {
                    m
                } else {
                    t
                }
            },
        )
        .collect()
}

/// The trial replaces the target only when strictly better.
pub fn de_selection(target_objective: f64, trial_objective: f64) -> bool {
    trial_objective < target_objective
}

/// `m` offspring `win + F (x_r1 - x_r2)` with fresh distinct `r1, r2` each.
pub fn clustering_mutation<R: Rng + ?Sized>(
    members: &[Vec<f64>],
    win: usize,
    f: f64,
    m: usize,
    bounds: &[(f64, f64)],
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| {
            let picks = sample(rng, members.len(), 2);
            let mut v = difference_vector(&members[win], &members[picks.index(0)], &members[picks.index(1)], f);
            reflect_into(&mut v, bounds);
            v
        })
        .collect()
}

/// Replaces `B` (M random members) with the best M of `offspring ∪ B`.
/// Incumbents win objective ties, so offspring that are no better leave the
/// population unchanged.
pub fn gpba_update<R: Rng + ?Sized>(
    pop: &mut Population,
    offspring: Vec<Vec<f64>>,
    offspring_objectives: Vec<f64>,
    rng: &mut R,
) {
    let m = offspring.len();
    assert_eq!(m, offspring_objectives.len());
    if m == 0 {
        return;
    }
    let mut slots = sample(rng, pop.members.len(), m.min(pop.members.len())).into_vec();
    slots.sort_unstable();
    // incumbents first, so the stable sort keeps them ahead on ties
    let mut pool: Vec<(f64, Vec<f64>)> = slots
        .iter()
        .map(|&s| (pop.objectives[s], pop.members[s].clone()))
        .collect();
    pool.extend(offspring_objectives.into_iter().zip(offspring));
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (&slot, (objective, member)) in slots.iter().zip(pool) {
        pop.members[slot] = member;
        pop.objectives[slot] = objective;
    }
    pop.refresh_best();
}
