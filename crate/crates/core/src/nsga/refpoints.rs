//! Das–Dennis reference directions and reference-point niching.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::Rng64;

/// Refuse to enumerate more points than this.
pub const MAX_REFERENCE_POINTS: u128 = 5_000_000;

/// Floor on the per-objective scale used when normalising.
pub const SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePointSet {
    pub points: Vec<Vec<f64>>,
    pub objectives: usize,
    pub granularity: usize,
}

impl ReferencePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `C(o + g - 1, g)`, the number of simplex-lattice points, or `None` on overflow.
pub fn reference_point_count(o: usize, g: usize) -> Option<u128> {
    if o == 0 {
        return Some(0);
    }
    let n = (o + g - 1) as u128;
    let k = g.min(o - 1) as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        // c * (n - i) / (i + 1) stays integral at every step
        c = c.checked_mul(n - i)? / (i + 1);
    }
    Some(c)
}

/// All points with coordinates in `{0, 1/g, ..., 1}` that sum to one.
///
/// Points are listed in lexicographic order of their integer compositions,
/// so for two objectives the first coordinate increases.
pub fn das_dennis(o: usize, g: usize) -> Result<ReferencePointSet> {
    if o < 2 || g < 1 {
        return Err(Error::Config(format!(
            "reference points need at least 2 objectives and granularity 1, got o={o}, g={g}"
        )));
    }
    let count = reference_point_count(o, g).unwrap_or(u128::MAX);
    if count > MAX_REFERENCE_POINTS {
        return Err(Error::TooManyPoints {
            count,
            limit: MAX_REFERENCE_POINTS,
        });
    }
    let mut points = Vec::with_capacity(count as usize);
    let mut parts = vec![0usize; o];
    compose(&mut parts, 0, g, g, &mut points);
    Ok(ReferencePointSet {
        points,
        objectives: o,
        granularity: g,
    })
}

fn compose(parts: &mut [usize], pos: usize, left: usize, g: usize, out: &mut Vec<Vec<f64>>) {
    if pos == parts.len() - 1 {
        parts[pos] = left;
        out.push(parts.iter().map(|&p| p as f64 / g as f64).collect());
        return;
    }
    for k in 0..=left {
        parts[pos] = k;
        compose(parts, pos + 1, left - k, g, out);
    }
}

/// Translates by the per-objective minimum and divides by the range.
pub fn normalize(objs: &[&[f64]]) -> Vec<Vec<f64>> {
    let m = objs.first().map_or(0, |o| o.len());
    let usable: Vec<&[f64]> = objs
        .iter()
        .copied()
        .filter(|o| o.iter().all(|v| v.is_finite() && v.abs() < f64::MAX))
        .collect();
    let basis = if usable.is_empty() { objs } else { &usable[..] };
    let mut ideal = vec![f64::INFINITY; m];
    let mut nadir = vec![f64::NEG_INFINITY; m];
    for o in basis {
        for k in 0..m {
            ideal[k] = ideal[k].min(o[k]);
            nadir[k] = nadir[k].max(o[k]);
        }
    }
    let scale: Vec<f64> = (0..m).map(|k| (nadir[k] - ideal[k]).max(SCALE_FLOOR)).collect();
    objs.iter()
        .map(|o| (0..m).map(|k| (o[k] - ideal[k]) / scale[k]).collect())
        .collect()
}

/// Perpendicular distance from `p` to the ray through `w`.
pub fn perpendicular_distance(p: &[f64], w: &[f64]) -> f64 {
    let ww: f64 = w.iter().map(|v| v * v).sum();
    let pw: f64 = p.iter().zip(w).map(|(a, b)| a * b).sum();
    let t = if ww > 0.0 { pw / ww } else { 0.0 };
    p.iter()
        .zip(w)
        .map(|(a, b)| (a - t * b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Nearest reference direction and the distance to it; ties go to the lower index.
pub fn associate(p: &[f64], refs: &ReferencePointSet) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (r, w) in refs.points.iter().enumerate() {
        let d = perpendicular_distance(p, w);
        if d < best.1 {
            best = (r, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct NicheSelection {
    /// Chosen members of the partial front, in pick order.
    pub selected: Vec<usize>,
    /// Reference index of every candidate, aligned with the input.
    pub niche: Vec<usize>,
}

/// Picks `k` members of the partial front `last` by reference-point niching.
///
/// `objs` holds every candidate (the already accepted fronts and the partial
/// front); `accepted` and `last` index into it. All candidates are normalised
/// together and attached to their nearest reference direction. Each step takes
/// a niche with the fewest accepted members (random among ties) that still has
/// unpicked members in `last`: the closest one if the niche is still empty,
/// otherwise a random one.
pub fn niche_select(
    objs: &[&[f64]],
    accepted: &[usize],
    last: &[usize],
    refs: &ReferencePointSet,
    k: usize,
    rng: &mut Rng64,
) -> Result<NicheSelection> {
    if refs.is_empty() {
        return Err(Error::Empty("reference point set"));
    }
    if k > last.len() {
        return Err(Error::Config(format!(
            "cannot pick {k} members from a front of {}",
            last.len()
        )));
    }
    let normed = normalize(objs);
    let assoc: Vec<(usize, f64)> = normed.iter().map(|p| associate(p, refs)).collect();
    let niche: Vec<usize> = assoc.iter().map(|a| a.0).collect();

    let mut count = vec![0usize; refs.len()];
    for &i in accepted {
        count[niche[i]] += 1;
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); refs.len()];
    for &i in last {
        members[niche[i]].push(i);
    }
    let mut open: Vec<usize> = (0..refs.len()).filter(|&r| !members[r].is_empty()).collect();

    let mut selected = Vec::with_capacity(k);
    while selected.len() < k {
        let min = open.iter().map(|&r| count[r]).min().expect("open niches remain while picks are owed");
        let tied: Vec<usize> = open.iter().copied().filter(|&r| count[r] == min).collect();
        let r = tied[rng.random_range(0..tied.len())];
        let pool = &mut members[r];
        let pos = if count[r] == 0 {
            (0..pool.len())
                .min_by(|&a, &b| assoc[pool[a]].1.total_cmp(&assoc[pool[b]].1).then(pool[a].cmp(&pool[b])))
                .expect("open niche has members")
        } else {
            rng.random_range(0..pool.len())
        };
        selected.push(pool.remove(pos));
        count[r] += 1;
        if pool.is_empty() {
            open.retain(|&o| o != r);
        }
    }
    Ok(NicheSelection { selected, niche })
}
