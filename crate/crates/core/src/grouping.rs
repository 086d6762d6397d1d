//! Channel-correlation metrics and the greedy user-grouping heuristic.
//!
//! Grouping runs in four steps: fix the group capacities, seed the first
//! group with the strongest user, seed every further group with the user
//! least correlated to the seeds chosen so far, then let the groups take
//! turns picking the remaining user best aligned with their current span.
//! Every argmax/argmin breaks ties toward the lowest user index.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::rng::{stream, Purpose};
use crate::{CMatrix, CVector, Error, Result};

/// Ordered partition of the users. Each group's list is sorted ascending and
/// fixes the order in which that group's symbols are indexed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    groups: Vec<Vec<usize>>,
}

impl Grouping {
    /// Validates that `groups` partitions `0..k`.
    pub fn new(mut groups: Vec<Vec<usize>>, k: usize) -> Result<Self> {
        let mut seen = vec![false; k];
        for g in &mut groups {
            if g.is_empty() {
                return Err(Error::invalid("groups must be nonempty"));
            }
            g.sort_unstable();
            for &u in g.iter() {
                if u >= k || seen[u] {
                    return Err(Error::invalid(format!("user {u} is out of range or repeated")));
                }
                seen[u] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("grouping does not cover every user"));
        }
        Ok(Self { groups })
    }

    pub fn single(k: usize) -> Self {
        Self { groups: vec![(0..k).collect()] }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.groups[g]
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn users(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Users outside group `g`, ascending.
    pub fn complement(&self, g: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .groups
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != g)
            .flat_map(|(_, users)| users.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// Writes `(user_index, group_index)` records in user order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            user_index: usize,
            group_index: usize,
        }
        let mut rows: Vec<Row> = self
            .groups
            .iter()
            .enumerate()
            .flat_map(|(g, users)| users.iter().map(move |&u| Row { user_index: u, group_index: g }))
            .collect();
        rows.sort_by_key(|r| r.user_index);
        let mut w = csv::Writer::from_writer(writer);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Columns of `h` selected by `users`, in the given order.
pub fn select_columns(h: &CMatrix, users: &[usize]) -> CMatrix {
    CMatrix::from_fn(h.nrows(), users.len(), |i, j| h[(i, users[j])])
}

/// Group capacities: `ceil(K/G)` for the first `K mod G` groups, `floor(K/G)`
/// for the rest.
pub fn capacities(k: usize, g: usize) -> Vec<usize> {
    (0..g).map(|i| k / g + usize::from(i < k % g)).collect()
}

/// `|u^H v| / (‖u‖ ‖v‖)`.
pub fn vec_corr(u: &CVector, v: &CVector) -> Result<f64> {
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::invalid("correlation of a zero vector"));
    }
    Ok((u.dotc(v).norm() / (nu * nv)).min(1.0))
}

/// Orthonormal basis of the column space of `z`, keeping singular values
/// above `1e-10 σ_max`.
pub fn range_basis(z: &CMatrix) -> Result<CMatrix> {
    if z.ncols() == 0 {
        return Err(Error::invalid("subspace needs at least one column"));
    }
    let svd = z.clone().svd(true, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Err(Error::invalid("subspace spanned by zero columns"));
    }
    let u = svd.u.expect("left singular vectors requested");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * smax)
        .collect();
    Ok(select_columns(&u, &keep))
}

/// Orthogonal projector onto the column space of `z`.
pub fn projector(z: &CMatrix) -> Result<CMatrix> {
    let b = range_basis(z)?;
    Ok(&b * b.adjoint())
}

/// `‖P_Z u‖ / ‖u‖`.
pub fn subspace_corr(u: &CVector, z: &CMatrix) -> Result<f64> {
    let nu = u.norm();
    if nu == 0.0 {
        return Err(Error::invalid("correlation of a zero vector"));
    }
    let b = range_basis(z)?;
    Ok(((b.adjoint() * u).norm() / nu).min(1.0))
}

fn argbest(candidates: &[usize], score: impl Fn(usize) -> Result<f64>, larger: bool) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &k in candidates {
        let s = score(k)?;
        let better = match best {
            None => true,
            Some((_, b)) => (larger && s > b) || (!larger && s < b),
        };
        if better {
            best = Some((k, s));
        }
    }
    best.map(|(k, _)| k).ok_or_else(|| Error::invalid("no candidate users"))
}

/// Greedy correlation-based grouping of the columns of `h` into `g` groups.
pub fn group_users(h: &CMatrix, g: usize) -> Result<Grouping> {
    let k = h.ncols();
    if g == 0 || g > k {
        return Err(Error::invalid(format!("cannot split {k} users into {g} groups")));
    }
    let caps = capacities(k, g);
    let col = |i: usize| h.column(i).into_owned();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); g];
    let mut free: Vec<usize> = (0..k).collect();
    let take = |free: &mut Vec<usize>, u: usize| free.retain(|&x| x != u);

    let first = argbest(&free, |i| Ok(h.column(i).norm()), true)?;
    groups[0].push(first);
    take(&mut free, first);
    let mut seeds = vec![first];
    for group in groups.iter_mut().skip(1) {
        let next = argbest(
            &free,
            |i| {
                let hi = col(i);
                seeds.iter().map(|&j| vec_corr(&col(j), &hi)).sum()
            },
            false,
        )?;
        group.push(next);
        seeds.push(next);
        take(&mut free, next);
    }

    while !free.is_empty() {
        for gi in 0..g {
            if free.is_empty() {
                break;
            }
            if groups[gi].len() >= caps[gi] {
                continue;
            }
            let basis = range_basis(&select_columns(h, &groups[gi]))?;
            let next = argbest(
                &free,
                |i| {
                    let hi = col(i);
                    let n = hi.norm();
                    if n == 0.0 {
                        return Err(Error::invalid("correlation of a zero vector"));
                    }
                    Ok((basis.adjoint() * hi).norm() / n)
                },
                true,
            )?;
            groups[gi].push(next);
            take(&mut free, next);
        }
    }
    Grouping::new(groups, k)
}

/// Uniformly random partition with the same capacities as [`group_users`].
pub fn random_grouping(k: usize, g: usize, seed: u64, index: u64) -> Result<Grouping> {
    if g == 0 || g > k {
        return Err(Error::invalid(format!("cannot split {k} users into {g} groups")));
    }
    let mut users: Vec<usize> = (0..k).collect();
    users.shuffle(&mut stream(seed, Purpose::Grouping, index));
    let mut groups = Vec::with_capacity(g);
    let mut start = 0;
    for cap in capacities(k, g) {
        groups.push(users[start..start + cap].to_vec());
        start += cap;
    }
    Grouping::new(groups, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{rayleigh_channel, scenario_channel, Scenario};
    use crate::linalg::max_abs_diff;
    use crate::rng::complex_gaussian;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn randv(n: usize, seed: u64) -> CVector {
        let mut rng = stream(seed, Purpose::Test, 10);
        CVector::from_fn(n, |_, _| complex_gaussian(&mut rng))
    }

    #[test]
    fn vec_corr_examples() {
        let u = randv(4, 1);
        let v = randv(4, 2);
        assert!((vec_corr(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        let e1 = CVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let e2 = CVector::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 2.0)]);
        assert_eq!(vec_corr(&e1, &e2).unwrap(), 0.0);
        let a = Complex64::new(-2.0, 0.7);
        assert!((vec_corr(&u.map(|x| x * a), &v).unwrap() - vec_corr(&u, &v).unwrap()).abs() < 1e-12);
        assert!((vec_corr(&u, &v).unwrap() - vec_corr(&v, &u).unwrap()).abs() < 1e-15);
        assert!(vec_corr(&CVector::zeros(4), &v).is_err());
    }

    #[test]
    fn subspace_corr_examples() {
        let z = rayleigh_channel(5, 2, 3).unwrap();
        let u = z.column(1).into_owned();
        assert!((subspace_corr(&u, &z).unwrap() - 1.0).abs() < 1e-12);
        // orthogonal to both columns
        let p = projector(&z).unwrap();
        let w = randv(5, 4);
        let o = &w - &p * &w;
        assert!(subspace_corr(&o, &z).unwrap() < 1e-12);
        let single = z.columns(0, 1).into_owned();
        let r = subspace_corr(&w, &single).unwrap();
        assert!((r - vec_corr(&w, &single.column(0).into_owned()).unwrap()).abs() < 1e-12);
        assert!(subspace_corr(&CVector::zeros(5), &z).is_err());
    }

    #[test]
    fn projector_properties() {
        let z = rayleigh_channel(6, 3, 8).unwrap();
        let p = projector(&z).unwrap();
        assert!((&p * &p - &p).norm() <= 1e-10);
        assert!(max_abs_diff(&p, &p.adjoint()) < 1e-12);
        assert!(max_abs_diff(&(&p * &z), &z) < 1e-10);

        let q = range_basis(&z).unwrap();
        assert!(max_abs_diff(&projector(&q).unwrap(), &(&q * q.adjoint())) < 1e-12);

        let one = z.columns(0, 1).into_owned();
        let dup = CMatrix::from_fn(6, 2, |i, _| z[(i, 0)]);
        assert!(max_abs_diff(&projector(&dup).unwrap(), &projector(&one).unwrap()) < 1e-12);
        assert!(projector(&CMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn capacities_split() {
        assert_eq!(capacities(12, 2), vec![6, 6]);
        assert_eq!(capacities(8, 3), vec![3, 3, 2]);
        assert_eq!(capacities(7, 3), vec![3, 2, 2]);
    }

    #[test]
    fn extreme_group_counts() {
        let h = rayleigh_channel(4, 5, 2).unwrap();
        let singletons = group_users(&h, 5).unwrap();
        let strongest = (0..5)
            .max_by(|&a, &b| h.column(a).norm().total_cmp(&h.column(b).norm()))
            .unwrap();
        assert_eq!(singletons.group(0), &[strongest]);
        assert!(singletons.groups().iter().all(|g| g.len() == 1));
        assert_eq!(group_users(&h, 1).unwrap().group(0), &[0, 1, 2, 3, 4]);
        assert!(group_users(&h, 6).is_err());
        assert!(group_users(&h, 0).is_err());
    }

    /// Straight-line re-execution of the grouping steps using explicit
    /// projector matrices.
    fn reference_grouping(h: &CMatrix, g: usize) -> Vec<Vec<usize>> {
        let k = h.ncols();
        let cap: Vec<usize> = (0..g).map(|i| if i < k % g { k / g + 1 } else { k / g }).collect();
        let col = |i: usize| h.column(i).into_owned();
        let rho = |a: usize, b: usize| {
            let (u, v) = (col(a), col(b));
            u.dotc(&v).norm() / (u.norm() * v.norm())
        };
        let mut assigned = vec![usize::MAX; k];
        let mut groups = vec![Vec::new(); g];
        let mut best = 0;
        for i in 1..k {
            if col(i).norm() > col(best).norm() {
                best = i;
            }
        }
        assigned[best] = 0;
        groups[0].push(best);
        let mut seeds = vec![best];
        for gi in 1..g {
            let mut pick = usize::MAX;
            let mut val = f64::INFINITY;
            for i in 0..k {
                if assigned[i] != usize::MAX {
                    continue;
                }
                let s: f64 = seeds.iter().map(|&j| rho(j, i)).sum();
                if s < val {
                    val = s;
                    pick = i;
                }
            }
            assigned[pick] = gi;
            groups[gi].push(pick);
            seeds.push(pick);
        }
        let mut left = k - g;
        while left > 0 {
            for gi in 0..g {
                if left == 0 || groups[gi].len() == cap[gi] {
                    continue;
                }
                let z = select_columns(h, &groups[gi]);
                let p = &z * (z.adjoint() * &z).try_inverse().unwrap() * z.adjoint();
                let mut pick = usize::MAX;
                let mut val = -1.0;
                for i in 0..k {
                    if assigned[i] != usize::MAX {
                        continue;
                    }
                    let r = (&p * col(i)).norm() / col(i).norm();
                    if r > val {
                        val = r;
                        pick = i;
                    }
                }
                assigned[pick] = gi;
                groups[gi].push(pick);
                left -= 1;
            }
        }
        for grp in &mut groups {
            grp.sort_unstable();
        }
        groups
    }

    #[test]
    fn matches_reference_execution() {
        for seed in 0..20 {
            let h = rayleigh_channel(4, 4, seed).unwrap();
            assert_eq!(group_users(&h, 2).unwrap().groups(), reference_grouping(&h, 2).as_slice());
            let h = rayleigh_channel(8, 7, seed).unwrap();
            assert_eq!(group_users(&h, 3).unwrap().groups(), reference_grouping(&h, 3).as_slice());
        }
    }

    #[test]
    fn separates_one_ring_clusters() {
        let s = Scenario::one_ring(16, 8);
        let mut separated = 0;
        for seed in 0..200 {
            let h = scenario_channel(&s, seed).unwrap().h;
            let grouping = group_users(&h, 2).unwrap();
            let clean = grouping
                .groups()
                .iter()
                .all(|g| g.iter().all(|&u| s.cluster_of(u) == s.cluster_of(g[0])));
            separated += usize::from(clean);
        }
        assert!(separated >= 190, "separated {separated}/200");
    }

    #[test]
    fn random_grouping_is_seeded_partition() {
        let a = random_grouping(12, 3, 5, 0).unwrap();
        assert_eq!(a, random_grouping(12, 3, 5, 0).unwrap());
        assert_eq!(a.sizes(), vec![4, 4, 4]);
        assert_eq!(a.users(), 12);
    }

    #[test]
    fn grouping_csv() {
        let g = Grouping::new(vec![vec![2, 0], vec![1]], 3).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "user_index,group_index\n0,0\n1,1\n2,0\n");
        assert!(Grouping::new(vec![vec![0, 0]], 2).is_err());
        assert!(Grouping::new(vec![vec![0]], 2).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn grouping_invariants(seed in 0u64..1_000_000, k in 1usize..10, g_raw in 1usize..10, extra in 0usize..3) {
            let g = 1 + (g_raw - 1) % k;
            let h = rayleigh_channel(k + extra, k, seed).unwrap();
            let grouping = group_users(&h, g).unwrap();
            prop_assert_eq!(grouping.len(), g);
            prop_assert_eq!(grouping.sizes(), capacities(k, g));
            let mut all: Vec<usize> = grouping.groups().iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..k).collect::<Vec<_>>());
            prop_assert_eq!(&grouping, &group_users(&h, g).unwrap());
        }
    }
}
