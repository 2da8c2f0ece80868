//! Linear finite elements on the lattice: edges in 1-d, two triangles per cell in 2-d.

use crate::grid::SpatialDomain;

/// One linear element: its measure and the gradient of each nodal basis function.
pub(crate) struct Element {
    pub nodes: [usize; 3],
    pub basis: [[f64; 2]; 3],
    pub len: usize,
    pub measure: f64,
}

impl Element {
    pub fn grad(&self, phi: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for a in 0..self.len {
            g[0] += phi[self.nodes[a]] * self.basis[a][0];
            g[1] += phi[self.nodes[a]] * self.basis[a][1];
        }
        g
    }
}

pub(crate) fn elements(space: &SpatialDomain, keep: impl Fn(&[usize]) -> bool) -> Vec<Element> {
    let [hx, hy] = space.spacing();
    let [nx, ny] = space.shape();
    let mut out = Vec::new();
    if space.dim() == 1 {
        for i in 0..nx - 1 {
            let nodes = [space.index(i, 0), space.index(i + 1, 0), 0];
            if keep(&nodes[..2]) {
                out.push(Element {
                    nodes,
                    basis: [[-1.0 / hx, 0.0], [1.0 / hx, 0.0], [0.0; 2]],
                    len: 2,
                    measure: hx,
                });
            }
        }
        return out;
    }
    let area = 0.5 * hx * hy;
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let a = space.index(i, j);
            let b = space.index(i + 1, j);
            let c = space.index(i + 1, j + 1);
            let d = space.index(i, j + 1);
            let lower = [a, b, c];
            if keep(&lower) {
                out.push(Element {
                    nodes: lower,
                    basis: [[-1.0 / hx, 0.0], [1.0 / hx, -1.0 / hy], [0.0, 1.0 / hy]],
                    len: 3,
                    measure: area,
                });
            }
            let upper = [a, c, d];
            if keep(&upper) {
                out.push(Element {
                    nodes: upper,
                    basis: [[0.0, -1.0 / hy], [1.0 / hx, 0.0], [-1.0 / hx, 1.0 / hy]],
                    len: 3,
                    measure: area,
                });
            }
        }
    }
    out
}

/// Lumped mass of each node: a share `|T| / (d + 1)` from every element in `elems`.
pub(crate) fn lumped_mass(space: &SpatialDomain, elems: &[Element]) -> Vec<f64> {
    let mut m = vec![0.0; space.len()];
    for e in elems {
        let share = e.measure / e.len as f64;
        for &n in &e.nodes[..e.len] {
            m[n] += share;
        }
    }
    m
}
