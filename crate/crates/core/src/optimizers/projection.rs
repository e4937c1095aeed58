use crate::config::Domain;
use crate::error::{OboError, Result};
use crate::types::Vector;

fn broadcast(values: &[f64], dim: usize, what: &'static str) -> Result<Vector> {
    match values.len() {
        1 => Ok(Vector::from_element(dim, values[0])),
        n if n == dim => Ok(Vector::from_column_slice(values)),
        n => Err(OboError::Dimension {
            context: what,
            expected: dim,
            actual: n,
        }),
    }
}

/// Checks that the domain is well formed for vectors of length `dim`.
pub fn check_domain(domain: &Domain, dim: usize) -> Result<()> {
    match domain {
        Domain::None => Ok(()),
        Domain::Ball { center, radius } => {
            broadcast(center, dim, "ball center")?;
            if !(*radius > 0.0) {
                return Err(OboError::Domain(format!("ball radius must be positive, got {radius}")));
            }
            Ok(())
        }
        Domain::Box { lo, hi } => {
            let lo = broadcast(lo, dim, "box lower bound")?;
            let hi = broadcast(hi, dim, "box upper bound")?;
            if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
                return Err(OboError::Domain("box lower bound exceeds upper bound".into()));
            }
            Ok(())
        }
    }
}

/// Euclidean projection onto the domain.
pub fn project(x: &Vector, domain: &Domain) -> Result<Vector> {
    check_domain(domain, x.len())?;
    Ok(match domain {
        Domain::None => x.clone(),
        Domain::Ball { center, radius } => {
            let c = broadcast(center, x.len(), "ball center")?;
            let offset = x - &c;
            let dist = offset.norm();
            if dist <= *radius {
                x.clone()
            } else {
                c + offset * (*radius / dist)
            }
        }
        Domain::Box { lo, hi } => {
            let lo = broadcast(lo, x.len(), "box lower bound")?;
            let hi = broadcast(hi, x.len(), "box upper bound")?;
            Vector::from_fn(x.len(), |i, _| x[i].clamp(lo[i], hi[i]))
        }
    })
}

/// Membership test; the ball allows `1e-12` of round-off.
pub fn contains(domain: &Domain, x: &Vector) -> bool {
    match domain {
        Domain::None => true,
        Domain::Ball { center, radius } => broadcast(center, x.len(), "ball center")
            .map(|c| (x - c).norm() <= radius + 1e-12)
            .unwrap_or(false),
        Domain::Box { lo, hi } => {
            match (broadcast(lo, x.len(), "lo"), broadcast(hi, x.len(), "hi")) {
                (Ok(lo), Ok(hi)) => (0..x.len()).all(|i| lo[i] <= x[i] && x[i] <= hi[i]),
                _ => false,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn none_is_identity() {
        let x = Vector::from_vec(vec![1e9, -3.0]);
        assert_eq!(project(&x, &Domain::None).unwrap(), x);
    }

    #[test]
    fn ball_radial_scaling() {
        let d = Domain::Ball {
            center: vec![0.0],
            radius: 1.0,
        };
        let p = project(&Vector::from_vec(vec![3.0, 4.0]), &d).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn box_clamps() {
        let d = Domain::Box {
            lo: vec![-1.0, -1.0],
            hi: vec![1.0, 1.0],
        };
        let p = project(&Vector::from_vec(vec![2.0, 0.5]), &d).unwrap();
        assert_eq!(p, Vector::from_vec(vec![1.0, 0.5]));
    }

    #[test]
    fn invalid_domains() {
        let x = Vector::zeros(2);
        let ball = Domain::Ball {
            center: vec![0.0],
            radius: 0.0,
        };
        assert!(matches!(project(&x, &ball), Err(OboError::Domain(_))));
        let bx = Domain::Box {
            lo: vec![1.0],
            hi: vec![0.0],
        };
        assert!(matches!(project(&x, &bx), Err(OboError::Domain(_))));
        let wrong = Domain::Ball {
            center: vec![0.0, 0.0, 0.0],
            radius: 1.0,
        };
        assert!(matches!(project(&x, &wrong), Err(OboError::Dimension { .. })));
    }

    proptest! {
        #[test]
        fn projections_are_feasible_and_idempotent(
            xs in proptest::collection::vec(-100.0f64..100.0, 3),
            c in proptest::collection::vec(-5.0f64..5.0, 3),
            r in 0.01f64..10.0,
        ) {
            let x = Vector::from_vec(xs);
            let ball = Domain::Ball { center: c.clone(), radius: r };
            let p = project(&x, &ball).unwrap();
            prop_assert!(contains(&ball, &p));
            let pp = project(&p, &ball).unwrap();
            prop_assert!((pp - &p).norm() <= 1e-12 * (1.0 + p.norm()));

            let lo: Vec<f64> = c.iter().map(|v| v - r).collect();
            let hi: Vec<f64> = c.iter().map(|v| v + r).collect();
            let bx = Domain::Box { lo, hi };
            let q = project(&x, &bx).unwrap();
            prop_assert!(contains(&bx, &q));
            prop_assert_eq!(project(&q, &bx).unwrap(), q);
        }
    }
}
