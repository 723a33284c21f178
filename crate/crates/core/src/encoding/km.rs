use super::EncodingError;

/// Right-continuous product-limit survival curve. `times` holds the distinct
/// event times; `surv[i]` is the value on `[times[i], times[i+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve {
    times: Vec<f64>,
    surv: Vec<f64>,
}

impl KmCurve {
    /// S(t), equal to 1 before the first event.
    pub fn eval(&self, t: f64) -> f64 {
        match self.times.partition_point(|&x| x <= t) {
            0 => 1.0,
            i => self.surv[i - 1],
        }
    }

    pub fn steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.surv.iter().copied())
    }
}

/// Product-limit estimator. Censorings tied with deaths stay in the risk set
/// at that time (deaths first).
pub fn km_fit(times: &[f64], events: &[bool]) -> Result<KmCurve, EncodingError> {
    if times.is_empty() {
        return Err(EncodingError::EmptyInput);
    }
    if times.len() != events.len() {
        return Err(EncodingError::LengthMismatch {
            left: times.len(),
            right: events.len(),
        });
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut at_risk = times.len();
    let mut s = 1.0;
    let mut out = KmCurve {
        times: Vec::new(),
        surv: Vec::new(),
    };
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut j = i;
        let mut deaths = 0usize;
        while j < order.len() && times[order[j]] == t {
            deaths += usize::from(events[order[j]]);
            j += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / at_risk as f64;
            out.times.push(t);
            out.surv.push(s);
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(out)
}
