//! The box `Λ_M = {−M, …, M}^d` with free boundary, and staircase routes.

use std::collections::BTreeMap;

/// Sites of `Λ_M`, indexed row-major with coordinate 0 fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoxGeometry {
    d: usize,
    m: usize,
    side: usize,
    sites: usize,
    bonds: Vec<(usize, usize)>,
}

impl BoxGeometry {
    pub fn new(d: usize, m: usize) -> Self {
        let side = 2 * m + 1;
        let sites = side.pow(d as u32);
        let mut g = Self { d, m, side, sites, bonds: Vec::new() };
        for x in 0..sites {
            let c = g.coord(x);
            for j in 0..d {
                let mut up = c.clone();
                up[j] += 1;
                if let Some(y) = g.index(&up) {
                    g.bonds.push((x, y));
                }
            }
        }
        g
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> usize {
        self.m
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    /// Unordered nearest-neighbour bonds `(x, x + e_j)`.
    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    pub fn coord(&self, x: usize) -> Vec<i64> {
        let mut rest = x;
        (0..self.d)
            .map(|_| {
                let c = (rest % self.side) as i64 - self.m as i64;
                rest /= self.side;
                c
            })
            .collect()
    }

    pub fn index(&self, c: &[i64]) -> Option<usize> {
        let mut x = 0;
        for j in (0..self.d).rev() {
            let s = c[j] + self.m as i64;
            if s < 0 || s >= self.side as i64 {
                return None;
            }
            x = x * self.side + s as usize;
        }
        Some(x)
    }
}

/// Nearest-neighbour path from `x` to `y`, correcting coordinate 0 first,
/// then 1, and so on. Includes both endpoints.
pub fn nn_route(x: &[i64], y: &[i64]) -> Vec<Vec<i64>> {
    let mut cur = x.to_vec();
    let mut route = vec![cur.clone()];
    for j in 0..x.len() {
        let step = (y[j] - cur[j]).signum();
        while cur[j] != y[j] {
            cur[j] += step;
            route.push(cur.clone());
        }
    }
    route
}

/// How often each directed bond is used by the routes between all ordered
/// pairs of distinct sites.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteCensus {
    pub uses: BTreeMap<(usize, usize), usize>,
    pub max_uses: usize,
    /// `(2M+1)^{d+1}`.
    pub bound: usize,
}

impl RouteCensus {
    pub fn within_bound(&self) -> bool {
        self.max_uses <= self.bound
    }
}

pub fn route_census(geometry: &BoxGeometry) -> RouteCensus {
    let mut uses = BTreeMap::new();
    for x in 0..geometry.sites() {
        let cx = geometry.coord(x);
        for y in 0..geometry.sites() {
            if x == y {
                continue;
            }
            let route = nn_route(&cx, &geometry.coord(y));
            for w in route.windows(2) {
                let a = geometry.index(&w[0]).expect("route stays in the box");
                let b = geometry.index(&w[1]).expect("route stays in the box");
                *uses.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    let max_uses = uses.values().copied().max().unwrap_or(0);
    let bound = (2 * geometry.radius() + 1).pow(geometry.dim() as u32 + 1);
    RouteCensus { uses, max_uses, bound }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinates_round_trip() {
        let g = BoxGeometry::new(2, 1);
        assert_eq!(g.sites(), 9);
        assert_eq!(g.coord(0), vec![-1, -1]);
        assert_eq!(g.coord(1), vec![0, -1]);
        for x in 0..9 {
            assert_eq!(g.index(&g.coord(x)), Some(x));
        }
        assert_eq!(g.index(&[2, 0]), None);
        // 2 · 3 · 2 bonds in a 3 × 3 grid.
        assert_eq!(g.bonds().len(), 12);
    }

    #[test]
    fn free_boundary_has_no_wrap() {
        let g = BoxGeometry::new(1, 2);
        assert_eq!(g.bonds(), &[(0, 1), (1, 2), (2, 3), (3, 4)]);
    }

    #[test]
    fn staircase_route() {
        assert_eq!(nn_route(&[0, 0], &[2, 1]), vec![vec![0, 0], vec![1, 0], vec![2, 0], vec![2, 1]]);
        assert_eq!(nn_route(&[1, -1], &[1, -1]), vec![vec![1, -1]]);
        let r = nn_route(&[1, 1], &[-1, 0]);
        assert_eq!(r.len(), 4);
        assert_eq!(r[1], vec![0, 1]);
    }

    #[test]
    fn census_bound() {
        for d in 1..=2 {
            for m in 1..=2 {
                let c = route_census(&BoxGeometry::new(d, m));
                assert!(c.within_bound(), "d={d} M={m}: {} > {}", c.max_uses, c.bound);
                assert!(c.max_uses > 0);
            }
        }
        // d = 1, M = 1: the bond (−1 → 0) carries the routes from −1 to 0 and to 1.
        let c = route_census(&BoxGeometry::new(1, 1));
        assert_eq!(c.uses[&(0, 1)], 2);
        assert_eq!(c.max_uses, 2);
    }
}
