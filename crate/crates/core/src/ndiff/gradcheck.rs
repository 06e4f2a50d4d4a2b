use super::{NdiffError, ParamStore, Tape, Var};

/// `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compare reverse-mode gradients of `f` against central finite differences
/// over every coordinate of every parameter in `params`.
///
/// `f` must bind its parameters through [`Tape::param`] and return a scalar.
/// Returns the maximum [`relative_error`] observed.
pub fn grad_check<F>(f: F, params: &ParamStore, eps: f64) -> Result<f64, NdiffError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, NdiffError>,
{
    let eval = |p: &ParamStore| -> Result<f64, NdiffError> {
        let mut tape = Tape::new();
        let loss = f(&mut tape, p)?;
        let v = tape.scalar(loss);
        if !v.is_finite() {
            return Err(NdiffError::NonFinite { op: "grad_check closure" });
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let loss = f(&mut tape, params)?;
    if !tape.scalar(loss).is_finite() {
        return Err(NdiffError::NonFinite { op: "grad_check closure" });
    }
    let grads = tape.backward(loss)?;

    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let (rows, cols) = params.get(name).map(|m| m.dim()).unwrap_or((0, 0));
        for idx in (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))) {
            let orig = params.get(name).unwrap()[idx];
            let set = |probe: &mut ParamStore, v: f64| {
                probe.get_mut(name).unwrap()[idx] = v;
            };
            set(&mut probe, orig + eps);
            let plus = eval(&probe)?;
            set(&mut probe, orig - eps);
            let minus = eval(&probe)?;
            set(&mut probe, orig);
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.param(name).map(|g| g[idx]).unwrap_or(0.0);
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn quadratic_closure() {
        let mut params = ParamStore::new();
        params.insert("w", array![[0.3, -1.2], [2.0, 0.7]]);
        let err = grad_check(
            |tape, p| {
                let w = tape.param(p, "w")?;
                let sq = tape.square(w)?;
                let s = tape.scale(sq, 1.5)?;
                tape.sum(s)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn non_finite_closure_errors() {
        let mut params = ParamStore::new();
        params.insert("w", array![[1.0]]);
        let res = grad_check(
            |tape, p| {
                let w = tape.param(p, "w")?;
                let c = tape.constant(array![[f64::NAN]]);
                let s = tape.add(w, c)?;
                tape.sum(s)
            },
            &params,
            1e-5,
        );
        assert!(res.is_err());
    }
}
