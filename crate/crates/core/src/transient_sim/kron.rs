use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

/// Eliminates every node not in `keep`: `Y_kk − Y_ke · Y_ee⁻¹ · Y_ek`.
///
/// The result is indexed in the order of `keep`.
pub fn kron_reduce(y_full: &DMatrix<Complex64>, keep: &[usize]) -> Result<DMatrix<Complex64>> {
    let n = y_full.nrows();
    assert_eq!(n, y_full.ncols(), "admittance matrix must be square");
    let mut kept = vec![false; n];
    for &k in keep {
        assert!(k < n, "kept node {k} out of range");
        kept[k] = true;
    }
    let elim: Vec<usize> = (0..n).filter(|&i| !kept[i]).collect();

    let y_kk = y_full.select_rows(keep).select_columns(keep);
    if elim.is_empty() {
        return Ok(y_kk);
    }
    let y_ke = y_full.select_rows(keep).select_columns(&elim);
    let y_ee = y_full.select_rows(&elim).select_columns(&elim);
    let y_ek = y_full.select_rows(&elim).select_columns(keep);

    let lu = y_ee.lu();
    let x = lu
        .solve(&y_ek)
        .ok_or(Error::Singular("Kron reduction (eliminated block)"))?;
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Singular("Kron reduction (eliminated block)"));
    }
    Ok(y_kk - y_ke * x)
}
