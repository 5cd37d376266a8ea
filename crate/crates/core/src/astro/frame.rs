use nalgebra::{Matrix3, Matrix6};

use super::{AstroError, StateVector};

/// Rotation from the inertial frame into the radial/transverse/normal frame of `sv`.
///
/// Rows are the R, T and N unit vectors, so `rtn_frame(sv) * x_inertial` gives RTN
/// components.
pub fn rtn_frame(sv: &StateVector) -> Result<Matrix3<f64>, AstroError> {
    let r = sv.position;
    let rmag = r.norm();
    if rmag == 0.0 || !rmag.is_finite() {
        return Err(AstroError::Conversion("RTN frame needs a nonzero position".into()));
    }
    let h = r.cross(&sv.velocity);
    let hmag = h.norm();
    if hmag == 0.0 || hmag <= 1e-14 * rmag * sv.velocity.norm() {
        return Err(AstroError::Conversion("RTN frame undefined for rectilinear state".into()));
    }
    let r_hat = r / rmag;
    let n_hat = h / hmag;
    let t_hat = n_hat.cross(&r_hat);
    Ok(Matrix3::from_rows(&[
        r_hat.transpose(),
        t_hat.transpose(),
        n_hat.transpose(),
    ]))
}

/// Block-diagonal 6×6 version of a 3×3 rotation, for position/velocity covariances.
pub fn block_rotation(rot: &Matrix3<f64>) -> Matrix6<f64> {
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(rot);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(rot);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::astro::{elements_to_state, Epoch, OrbitalElements};
    use nalgebra::Vector3;

    #[test]
    fn axis_aligned_state_gives_identity() {
        let sv = StateVector::new(Vector3::new(7000.0, 0.0, 0.0), Vector3::new(0.0, 7.5, 0.0), Epoch::ZERO);
        let rot = rtn_frame(&sv).unwrap();
        assert!((rot - Matrix3::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn inclined_orbit_velocity_has_no_normal_component() {
        let el = OrbitalElements::new(7100.0, 0.02, 1.1, 0.4, 2.2, 0.7, Epoch::ZERO, 0.0).unwrap();
        let sv = elements_to_state(&el).unwrap();
        let rot = rtn_frame(&sv).unwrap();
        let v = rot * sv.velocity;
        assert!(v.z.abs() < 1e-12, "normal velocity {}", v.z);
        let r = rot * sv.position;
        assert!((r.x - sv.position.norm()).abs() < 1e-9);
        assert!(r.y.abs() < 1e-9 && r.z.abs() < 1e-9);
        assert!((rot * rot.transpose() - Matrix3::identity()).abs().max() < 1e-12);
        assert!((rot.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rectilinear_state_is_rejected() {
        let sv = StateVector::new(Vector3::new(7000.0, 0.0, 0.0), Vector3::new(3.0, 0.0, 0.0), Epoch::ZERO);
        assert!(rtn_frame(&sv).is_err());
    }
}
