//! Constrained dominance, non-dominated sorting and crowding distance.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::objectives::ObjectiveVector;

/// Constrained dominance: a feasible vector beats an infeasible one, two
/// infeasible vectors compare by total violation, and two feasible vectors by
/// Pareto dominance on the (minimised) values.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> Result<bool> {
    if a.values.len() != b.values.len() {
        return Err(Error::Shape {
            context: "dominance check",
            expected: a.values.len(),
            found: b.values.len(),
        });
    }
    Ok(dominates_unchecked(a, b))
}

pub(crate) fn dominates_unchecked(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    match (a.feasible, b.feasible) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.total_violation < b.total_violation,
        (true, true) => pareto_dominates(&a.values, &b.values),
    }
}

/// Plain Pareto dominance for minimisation.
pub fn pareto_dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

fn check_arity(pop: &[ObjectiveVector]) -> Result<()> {
    let n = pop.first().map_or(0, |p| p.values.len());
    for p in pop {
        if p.values.len() != n {
            return Err(Error::Shape {
                context: "population objectives",
                expected: n,
                found: p.values.len(),
            });
        }
    }
    Ok(())
}

/// Splits the population into fronts of mutually non-dominated members.
///
/// Front `k + 1` holds the vectors that are only dominated by members of the
/// first `k` fronts. Indices inside a front are ascending.
pub fn fast_nondominated_sort(pop: &[ObjectiveVector]) -> Result<Vec<Vec<usize>>> {
    if pop.is_empty() {
        return Err(Error::Empty("population"));
    }
    check_arity(pop)?;
    let n = pop.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates_unchecked(&pop[i], &pop[j]) {
                dominated_by_me[i].push(j);
                domination_count[j] += 1;
            } else if dominates_unchecked(&pop[j], &pop[i]) {
                dominated_by_me[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    Ok(fronts)
}

/// Front index (0-based) of every member, from [`fast_nondominated_sort`].
pub fn ranks(fronts: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut rank = vec![0; n];
    for (r, front) in fronts.iter().enumerate() {
        for &i in front {
            rank[i] = r;
        }
    }
    rank
}

/// Crowding distance of each point of a front.
///
/// Per objective the points are ordered by value; the two ends get an
/// infinite distance and interior points add the normalised gap between
/// their neighbours. Objectives with zero range add nothing.
#[allow(clippy::needless_range_loop)]
pub fn crowding_distance(front: &[&[f64]]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].len();
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..m {
        order.sort_by(|&a, &b| front[a][k].total_cmp(&front[b][k]).then(a.cmp(&b)));
        let lo = front[order[0]][k];
        let hi = front[order[n - 1]][k];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if !(range > 0.0 && range.is_finite()) {
            continue;
        }
        for w in 1..n - 1 {
            let gap = front[order[w + 1]][k] - front[order[w - 1]][k];
            dist[order[w]] += gap / range;
        }
    }
    dist
}

/// Orders indices by descending crowding distance, ties by index.
pub(crate) fn by_crowding_desc(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}
