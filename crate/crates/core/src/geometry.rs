//! Exact convex geometry in two and three dimensions: hulls, vertex enumeration, volumes.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::regions::Halfspace;

const EPS: f64 = 1e-9;

fn cross2(o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise hull (monotone chain); collinear points are dropped.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= EPS && (a[1] - b[1]).abs() <= EPS);
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 && cross2(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= EPS {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Shoelace area of a simple polygon given in order.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    twice.abs() / 2.0
}

fn dedup_points(points: &mut Vec<Vec<f64>>, tol: f64) {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for p in points.drain(..) {
        if !out.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= tol)) {
            out.push(p);
        }
    }
    *points = out;
}

/// Facets of the 3D hull as `(outward unit normal, offset, indices of points on the facet)`.
fn hull_facets_3d(pts: &[Vector3<f64>], scale: f64) -> Vec<(Vector3<f64>, f64, Vec<usize>)> {
    let n = pts.len();
    let tol = 1e-9 * scale.max(1.0);
    let mut facets: Vec<(Vector3<f64>, f64, Vec<usize>)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let normal = (pts[j] - pts[i]).cross(&(pts[k] - pts[i]));
                let norm = normal.norm();
                if norm <= tol * tol.max(1e-12) || norm <= 1e-14 {
                    continue;
                }
                let mut normal = normal / norm;
                let mut offset = normal.dot(&pts[i]);
                let above = pts.iter().filter(|p| normal.dot(p) - offset > tol).count();
                let below = pts.iter().filter(|p| normal.dot(p) - offset < -tol).count();
                if above > 0 && below > 0 {
                    continue;
                }
                if above > 0 {
                    normal = -normal;
                    offset = -offset;
                }
                let duplicate = facets
                    .iter()
                    .any(|(m, o, _)| (m - normal).norm() <= 1e-9 && (o - offset).abs() <= tol);
                if duplicate {
                    continue;
                }
                let on: Vec<usize> = (0..n).filter(|&q| (normal.dot(&pts[q]) - offset).abs() <= tol).collect();
                facets.push((normal, offset, on));
            }
        }
    }
    facets
}

/// Volume of the convex hull of 3D points: cones from the centroid over each facet.
pub fn hull_volume_3d(points: &[[f64; 3]]) -> f64 {
    let mut pts: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
    dedup_points(&mut pts, EPS);
    if pts.len() < 4 {
        return 0.0;
    }
    let v: Vec<Vector3<f64>> = pts.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect();
    let scale = v.iter().map(|p| p.amax()).fold(0.0, f64::max);
    let facets = hull_facets_3d(&v, scale);
    if facets.len() < 4 {
        return 0.0;
    }
    let centroid = v.iter().fold(Vector3::zeros(), |acc, p| acc + p) / v.len() as f64;
    facets
        .iter()
        .map(|(normal, offset, on)| {
            // In-plane basis for the facet polygon.
            let helper = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let u = normal.cross(&helper).normalize();
            let w = normal.cross(&u);
            let flat: Vec<[f64; 2]> = on.iter().map(|&q| [u.dot(&v[q]), w.dot(&v[q])]).collect();
            let area = polygon_area(&convex_hull_2d(&flat));
            let height = offset - normal.dot(&centroid);
            area * height / 3.0
        })
        .sum()
}

/// Vertices of `{z : hᵀz ≤ offset ∀h}` in two or three dimensions.
pub fn enumerate_vertices(halfspaces: &[Halfspace], dim: usize) -> Result<Vec<Vec<f64>>> {
    let feasible = |z: &[f64]| {
        halfspaces
            .iter()
            .all(|h| h.excess(z) <= 1e-9 * (1.0 + h.offset.abs()))
    };
    let m = halfspaces.len();
    let mut out = Vec::new();
    match dim {
        2 => {
            for i in 0..m {
                for j in i + 1..m {
                    let (a, b) = (&halfspaces[i], &halfspaces[j]);
                    let mat = Matrix2::new(a.normal[0], a.normal[1], b.normal[0], b.normal[1]);
                    if mat.determinant().abs() <= 1e-12 {
                        continue;
                    }
                    if let Some(inv) = mat.try_inverse() {
                        let z = inv * Vector2::new(a.offset, b.offset);
                        let z = vec![z.x, z.y];
                        if feasible(&z) {
                            out.push(z);
                        }
                    }
                }
            }
        }
        3 => {
            for i in 0..m {
                for j in i + 1..m {
                    for k in j + 1..m {
                        let (a, b, c) = (&halfspaces[i], &halfspaces[j], &halfspaces[k]);
                        let mat = Matrix3::new(
                            a.normal[0], a.normal[1], a.normal[2], b.normal[0], b.normal[1], b.normal[2], c.normal[0],
                            c.normal[1], c.normal[2],
                        );
                        if mat.determinant().abs() <= 1e-12 {
                            continue;
                        }
                        if let Some(inv) = mat.try_inverse() {
                            let z = inv * Vector3::new(a.offset, b.offset, c.offset);
                            let z = vec![z.x, z.y, z.z];
                            if feasible(&z) {
                                out.push(z);
                            }
                        }
                    }
                }
            }
        }
        other => return Err(Error::UnsupportedDimension(other)),
    }
    dedup_points(&mut out, 1e-8);
    Ok(out)
}

/// Exact volume (area in 2D) of the hull of `points`.
pub fn points_volume(points: &[&[f64]], dim: usize) -> Result<f64> {
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: points.iter().map(|p| p.len()).find(|&l| l != dim).unwrap_or(dim),
        });
    }
    match dim {
        2 => {
            let flat: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
            Ok(polygon_area(&convex_hull_2d(&flat)))
        }
        3 => {
            let flat: Vec<[f64; 3]> = points.iter().map(|p| [p[0], p[1], p[2]]).collect();
            Ok(hull_volume_3d(&flat))
        }
        other => Err(Error::UnsupportedDimension(other)),
    }
}

/// Exact volume of a bounded halfspace intersection.
pub fn halfspace_volume(halfspaces: &[Halfspace], dim: usize) -> Result<f64> {
    let vertices = enumerate_vertices(halfspaces, dim)?;
    let refs: Vec<&[f64]> = vertices.iter().map(Vec::as_slice).collect();
    points_volume(&refs, dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::Provenance;

    fn hs(normal: &[f64], offset: f64) -> Halfspace {
        Halfspace::new(normal.to_vec(), offset, Provenance::Bound).unwrap()
    }

    fn unit_box(dim: usize) -> Vec<Halfspace> {
        let mut out = Vec::new();
        for j in 0..dim {
            let mut e = vec![0.0; dim];
            e[j] = 1.0;
            out.push(hs(&e, 1.0));
            e[j] = -1.0;
            out.push(hs(&e, 0.0));
        }
        out
    }

    #[test]
    fn square_and_triangle() {
        let sq: Vec<&[f64]> = vec![&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0], &[0.5, 0.5]];
        assert!((points_volume(&sq, 2).unwrap() - 1.0).abs() < 1e-12);
        let tri: Vec<&[f64]> = vec![&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]];
        assert!((points_volume(&tri, 2).unwrap() - 0.5).abs() < 1e-12);
        let line: Vec<&[f64]> = vec![&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]];
        assert_eq!(points_volume(&line, 2).unwrap(), 0.0);
    }

    #[test]
    fn tri_region_area() {
        let mut h = unit_box(2);
        h.push(hs(&[1.0, 1.0], 1.5));
        h.push(hs(&[-1.0, -1.0], -1.0));
        let mut v = enumerate_vertices(&h, 2).unwrap();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(v.len(), 4);
        assert!((halfspace_volume(&h, 2).unwrap() - 0.375).abs() < 1e-12);
    }

    #[test]
    fn cube_and_simplex() {
        assert!((halfspace_volume(&unit_box(3), 3).unwrap() - 1.0).abs() < 1e-12);
        let simplex: Vec<&[f64]> = vec![&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]];
        assert!((points_volume(&simplex, 3).unwrap() - 1.0 / 6.0).abs() < 1e-12);
        let mut corner_cut = unit_box(3);
        corner_cut.push(hs(&[1.0, 1.0, 1.0], 2.5));
        // Cube minus the corner tetrahedron with legs 0.5.
        let want = 1.0 - 0.5f64.powi(3) / 6.0;
        assert!((halfspace_volume(&corner_cut, 3).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn four_dimensions_rejected() {
        assert!(matches!(halfspace_volume(&unit_box(4), 4), Err(Error::UnsupportedDimension(4))));
    }
}
