use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, MultiPatchModel, Subdomain};

/// Global index of one free coefficient and the sign with which a local
/// basis function contributes to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlobalDof {
    pub index: usize,
    pub sign: f64,
}

/// Local-to-global numbering after gluing conforming interfaces,
/// eliminating Dirichlet coefficients and folding anti-periodic pairs.
///
/// Free indices are ordered rotor block first, then stator block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DofMap {
    offsets: Vec<usize>,
    raw: Vec<Option<GlobalDof>>,
    n_rotor: usize,
    n_stator: usize,
    /// Raw indices fixed to zero.
    pub dirichlet: Vec<usize>,
    /// `(master, slave)` raw index pairs with `u_slave = -u_master`.
    pub antiperiodic: Vec<(usize, usize)>,
}

struct SignedUnionFind {
    parent: Vec<usize>,
    sign: Vec<f64>,
    zero: Vec<bool>,
}

impl SignedUnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            sign: vec![1.0; n],
            zero: vec![false; n],
        }
    }

    /// Returns the root and the sign `s` with `x_i = s * x_root`.
    fn find(&mut self, i: usize) -> (usize, f64) {
        let p = self.parent[i];
        if p == i {
            return (i, 1.0);
        }
        let (root, s) = self.find(p);
        self.parent[i] = root;
        self.sign[i] *= s;
        (root, self.sign[i])
    }

    /// Imposes `x_a = s * x_b`.
    fn union(&mut self, a: usize, b: usize, s: f64) {
        let (ra, sa) = self.find(a);
        let (rb, sb) = self.find(b);
        if ra == rb {
            if sa != s * sb {
                self.zero[ra] = true;
            }
            return;
        }
        let (keep, drop, rel) = if ra < rb { (ra, rb, sa * s * sb) } else { (rb, ra, sa * s * sb) };
        // x_drop = rel * x_keep in both orientations since rel = +-1
        self.parent[drop] = keep;
        self.sign[drop] = rel;
        self.zero[keep] |= self.zero[drop];
    }
}

impl DofMap {
    pub fn new(model: &MultiPatchModel) -> Result<Self> {
        let mut offsets = Vec::with_capacity(model.patches.len() + 1);
        let mut total = 0;
        for p in &model.patches {
            offsets.push(total);
            total += p.num_basis();
        }
        offsets.push(total);
        let mut uf = SignedUnionFind::new(total);

        let edge_raw = |patch: usize, edge| -> Vec<usize> {
            model.patches[patch]
                .edge_dofs(edge)
                .into_iter()
                .map(|l| offsets[patch] + l)
                .collect()
        };

        for (n, itf) in model.interfaces.iter().enumerate() {
            let (pa, pb) = (&model.patches[itf.a.patch], &model.patches[itf.b.patch]);
            if pa.subdomain != pb.subdomain {
                return Err(Error::Assembly(format!(
                    "interface {n} joins rotor and stator patches; use the air-gap coupling instead"
                )));
            }
            let a = edge_raw(itf.a.patch, itf.a.edge);
            let mut b = edge_raw(itf.b.patch, itf.b.edge);
            if a.len() != b.len() {
                return Err(Error::Assembly(format!("interface {n} has mismatched edge sizes")));
            }
            if itf.reversed {
                b.reverse();
            }
            for (&i, &j) in a.iter().zip(&b) {
                uf.union(i, j, 1.0);
            }
        }

        let mut antiperiodic = Vec::new();
        for pair in &model.antiperiodic_pairs {
            let m = edge_raw(pair.master.patch, pair.master.edge);
            let mut s = edge_raw(pair.slave.patch, pair.slave.edge);
            if m.len() != s.len() {
                return Err(Error::Assembly("anti-periodic edges have mismatched sizes".into()));
            }
            if pair.reversed {
                s.reverse();
            }
            for (&i, &j) in m.iter().zip(&s) {
                uf.union(j, i, -1.0);
                antiperiodic.push((i, j));
            }
        }

        let mut dirichlet = Vec::new();
        for e in model.edges_tagged(BoundaryTag::Dirichlet) {
            for i in edge_raw(e.patch, e.edge) {
                let (r, _) = uf.find(i);
                uf.zero[r] = true;
                dirichlet.push(i);
            }
        }
        dirichlet.sort_unstable();
        dirichlet.dedup();

        let subdomain_of = |raw: usize| {
            let k = offsets.partition_point(|&o| o <= raw) - 1;
            model.patches[k].subdomain
        };
        let mut roots: Vec<usize> = Vec::new();
        let mut seen = vec![false; total];
        for i in 0..total {
            let (r, _) = uf.find(i);
            if !uf.zero[r] && !seen[r] {
                seen[r] = true;
                roots.push(r);
            }
        }
        let mut free_index = vec![usize::MAX; total];
        let mut next = 0;
        for want in [Subdomain::Rotor, Subdomain::Stator] {
            for &r in &roots {
                if subdomain_of(r) == want {
                    free_index[r] = next;
                    next += 1;
                }
            }
        }
        let n_rotor = roots.iter().filter(|&&r| subdomain_of(r) == Subdomain::Rotor).count();
        let raw = (0..total)
            .map(|i| {
                let (r, s) = uf.find(i);
                (!uf.zero[r]).then(|| GlobalDof { index: free_index[r], sign: s })
            })
            .collect();

        Ok(Self {
            offsets,
            raw,
            n_rotor,
            n_stator: next - n_rotor,
            dirichlet,
            antiperiodic,
        })
    }

    pub fn n_free(&self) -> usize {
        self.n_rotor + self.n_stator
    }

    pub fn n_rotor(&self) -> usize {
        self.n_rotor
    }

    pub fn n_stator(&self) -> usize {
        self.n_stator
    }

    pub fn n_raw(&self) -> usize {
        self.raw.len()
    }

    pub fn patch_offset(&self, patch: usize) -> usize {
        self.offsets[patch]
    }

    pub fn global(&self, patch: usize, local: usize) -> Option<GlobalDof> {
        self.raw[self.offsets[patch] + local]
    }

    pub fn raw(&self, raw: usize) -> Option<GlobalDof> {
        self.raw[raw]
    }

    /// Spline coefficients of one patch from the free coefficient vector.
    pub fn patch_coefficients(&self, patch: usize, u: &[f64]) -> Vec<f64> {
        let (a, b) = (self.offsets[patch], self.offsets[patch + 1]);
        self.raw[a..b]
            .iter()
            .map(|g| g.map_or(0.0, |g| g.sign * u[g.index]))
            .collect()
    }

    /// Free indices touched by the given patches, sorted.
    pub fn free_dofs_of(&self, patches: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = patches
            .iter()
            .flat_map(|&k| self.raw[self.offsets[k]..self.offsets[k + 1]].iter())
            .filter_map(|g| g.map(|g| g.index))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}
