use super::dense::{check_finite, check_square, Mat};
use crate::error::{LqrError, Result};

/// `e^{F t}` by Padé scaling and squaring.
pub fn matrix_exponential(f: &Mat, t: f64) -> Result<Mat> {
    let n = check_square("F", f)?;
    check_finite("F", f)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(LqrError::InvalidArgument(format!("time must be finite and nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(Mat::identity(n, n));
    }
    let e = (f * t).exp();
    if e.iter().all(|x| x.is_finite()) {
        Ok(e)
    } else {
        Err(LqrError::Overflow(format!("e^(F t) overflowed at t = {t}")))
    }
}
