//! Cartesian geometry on point-cloud frames: contact distances and
//! pseudo-dihedral cosines, each with analytic gradients.

use crate::error::{Error, Result};
use crate::features::Frame;

pub(crate) type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn axpy(a: Vec3, s: f64, b: Vec3) -> Vec3 {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Position of atom `index` (coordinates `3*index .. 3*index + 3`).
pub(crate) fn atom(frame: &Frame, index: usize) -> Result<Vec3> {
    let base = 3 * index;
    if base + 3 > frame.coords.len() {
        return Err(Error::input(format!(
            "atom index {index} out of range for a frame with {} coordinates",
            frame.coords.len()
        )));
    }
    Ok([
        frame.coords[base],
        frame.coords[base + 1],
        frame.coords[base + 2],
    ])
}

/// Euclidean distance between atoms `i` and `j`.
pub fn contact_distance(frame: &Frame, i: usize, j: usize) -> Result<f64> {
    Ok(contact_distance_grad(frame, i, j)?.0)
}

/// Distance and its gradient with respect to atom `i` (the gradient for `j`
/// is the negation).
pub(crate) fn contact_distance_grad(frame: &Frame, i: usize, j: usize) -> Result<(f64, Vec3)> {
    if i == j {
        return Err(Error::DegeneratePair(i));
    }
    let d = sub(atom(frame, i)?, atom(frame, j)?);
    let r = norm(d);
    // Coincident atoms have distance zero and no defined direction.
    let g = if r > 0.0 { scale(d, 1.0 / r) } else { [0.0; 3] };
    Ok((r, g))
}

/// Cosine of the torsion angle defined by atoms `a-b-c-d`.
pub fn pseudo_dihedral_cos(frame: &Frame, a: usize, b: usize, c: usize, d: usize) -> Result<f64> {
    Ok(pseudo_dihedral_cos_grad(frame, a, b, c, d)?.0)
}

/// Torsion cosine and its gradient with respect to the four atom positions.
pub(crate) fn pseudo_dihedral_cos_grad(
    frame: &Frame,
    a: usize,
    b: usize,
    c: usize,
    d: usize,
) -> Result<(f64, [Vec3; 4])> {
    let (pa, pb, pc, pd) = (atom(frame, a)?, atom(frame, b)?, atom(frame, c)?, atom(frame, d)?);
    let b1 = sub(pb, pa);
    let b2 = sub(pc, pb);
    let b3 = sub(pd, pc);
    let (l1, l2, l3) = (norm(b1), norm(b2), norm(b3));
    if l1 == 0.0 || l2 == 0.0 || l3 == 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "zero-length bond in torsion ({a}, {b}, {c}, {d})"
        )));
    }
    let m = cross(b1, b2);
    let n = cross(b2, b3);
    let (mm, nn) = (norm(m), norm(n));
    const COLLINEAR: f64 = 1e-10;
    if mm <= COLLINEAR * l1 * l2 || nn <= COLLINEAR * l2 * l3 {
        return Err(Error::DegenerateGeometry(format!(
            "collinear atoms in torsion ({a}, {b}, {c}, {d})"
        )));
    }
    let u = scale(m, 1.0 / mm);
    let v = scale(n, 1.0 / nn);
    let cos = dot(u, v).clamp(-1.0, 1.0);

    // d cos / dm and d cos / dn
    let gm = scale(axpy(v, -cos, u), 1.0 / mm);
    let gn = scale(axpy(u, -cos, v), 1.0 / nn);
    // back through m = b1 x b2 and n = b2 x b3
    let g1 = cross(b2, gm);
    let g2 = axpy(cross(gm, b1), 1.0, cross(b3, gn));
    let g3 = cross(gn, b2);

    let grad_a = scale(g1, -1.0);
    let grad_b = sub(g1, g2);
    let grad_c = sub(g2, g3);
    let grad_d = g3;
    Ok((cos, [grad_a, grad_b, grad_c, grad_d]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(points: &[Vec3]) -> Frame {
        Frame::new(points.iter().flatten().copied().collect())
    }

    #[test]
    fn distance_examples() {
        let f = frame(&[[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]);
        assert_eq!(contact_distance(&f, 0, 1).unwrap(), 5.0);
        let f = frame(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]);
        assert_eq!(contact_distance(&f, 0, 1).unwrap(), 0.0);
        let f = frame(&[[1.0, 1.0, 1.0], [1.0, 1.0, 1.25]]);
        assert_eq!(contact_distance(&f, 0, 1).unwrap(), 0.25);
    }

    #[test]
    fn same_atom_is_degenerate() {
        let f = frame(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert!(matches!(contact_distance(&f, 1, 1), Err(Error::DegeneratePair(1))));
    }

    #[test]
    fn torsion_cis_trans_right_angle() {
        let cis = frame(&[[1.0, 0.0, 0.0], [0.0; 3], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]);
        assert!((pseudo_dihedral_cos(&cis, 0, 1, 2, 3).unwrap() - 1.0).abs() < 1e-15);
        let trans = frame(&[[1.0, 0.0, 0.0], [0.0; 3], [0.0, 1.0, 0.0], [-1.0, 1.0, 0.0]]);
        assert!((pseudo_dihedral_cos(&trans, 0, 1, 2, 3).unwrap() + 1.0).abs() < 1e-15);
        let right = frame(&[[1.0, 0.0, 0.0], [0.0; 3], [0.0, 1.0, 0.0], [0.0, 1.0, 1.0]]);
        assert!(pseudo_dihedral_cos(&right, 0, 1, 2, 3).unwrap().abs() < 1e-12);
    }

    #[test]
    fn collinear_torsion_rejected() {
        let f = frame(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [2.0, 1.0, 0.0]]);
        assert!(matches!(
            pseudo_dihedral_cos(&f, 0, 1, 2, 3),
            Err(Error::DegenerateGeometry(_))
        ));
    }
}
