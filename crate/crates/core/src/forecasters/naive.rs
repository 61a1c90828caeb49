use crate::error::{Error, Result};

/// Repeats the last observed value.
pub fn naive(history: &[Option<f64>], horizon: usize) -> Result<Vec<f64>> {
    let last = history
        .iter()
        .rev()
        .find_map(|v| *v)
        .ok_or_else(|| Error::InsufficientData("naive forecast needs an observed value".into()))?;
    Ok(vec![last; horizon])
}

/// Step `h` takes the value one `period` earlier than its target day, falling
/// back to the naive value where that value is missing. Steps beyond one period
/// reuse earlier forecast steps.
pub fn seasonal_naive(history: &[Option<f64>], horizon: usize, period: usize) -> Result<Vec<f64>> {
    if period == 0 {
        return Err(Error::Domain("seasonal period must be positive".into()));
    }
    if history.len() < period {
        return Err(Error::InsufficientData(format!(
            "seasonal naive needs {period} values, history has {}",
            history.len()
        )));
    }
    let fallback = naive(history, 1)?[0];
    let n = history.len();
    let mut out: Vec<f64> = Vec::with_capacity(horizon);
    for h in 1..=horizon {
        // target index n - 1 + h; source index n - 1 + h - period
        let src = n - 1 + h - period;
        let v = if src < n { history[src] } else { Some(out[src - n]) };
        out.push(v.unwrap_or(fallback));
    }
    Ok(out)
}
