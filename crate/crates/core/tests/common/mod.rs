#![allow(dead_code)]

pub mod criteria;
pub mod oracle;

/// Outcome of one named check.
pub type Check = Result<(), String>;

pub fn close(what: &str, got: f64, want: f64, tol: f64) -> Check {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!(
            "{what}: got {got}, expected {want} (tolerance {tol})"
        ))
    }
}

pub fn exact(what: &str, got: f64, want: f64) -> Check {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: got {got:e}, expected exactly {want:e}"))
    }
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}
