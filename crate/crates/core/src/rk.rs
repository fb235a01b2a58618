//! Embedded explicit Runge-Kutta pairs (fifth-order solution, fourth-order
//! error estimate), selectable by name.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

pub trait StepMethod: Send + Sync {
    fn name(&self) -> &'static str;
    /// Order of the error estimator; the controller exponent is `1/(order+1)`.
    fn error_order(&self) -> u32;
    /// One step of size `h` from `(t, y)`; writes the propagated solution and
    /// the embedded error estimate.
    fn step(&self, f: &mut dyn FnMut(f64, &[f64], &mut [f64]), t: f64, y: &[f64], h: f64, y_out: &mut [f64], err: &mut [f64]);
}

pub struct Tableau {
    pub name: &'static str,
    pub c: &'static [f64],
    pub a: &'static [&'static [f64]],
    pub b: &'static [f64],
    pub b_low: &'static [f64],
}

impl StepMethod for Tableau {
    fn name(&self) -> &'static str {
        self.name
    }

    fn error_order(&self) -> u32 {
        4
    }

    fn step(&self, f: &mut dyn FnMut(f64, &[f64], &mut [f64]), t: f64, y: &[f64], h: f64, y_out: &mut [f64], err: &mut [f64]) {
        let n = y.len();
        let s = self.c.len();
        let mut k = vec![vec![0.0; n]; s];
        let mut tmp = vec![0.0; n];
        for i in 0..s {
            tmp.copy_from_slice(y);
            for (j, &a) in self.a[i].iter().enumerate() {
                if a != 0.0 {
                    for (x, kj) in tmp.iter_mut().zip(&k[j]) {
                        *x += h * a * kj;
                    }
                }
            }
            f(t + self.c[i] * h, &tmp, &mut k[i]);
        }
        for m in 0..n {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for i in 0..s {
                hi += self.b[i] * k[i][m];
                lo += self.b_low[i] * k[i][m];
            }
            y_out[m] = y[m] + h * hi;
            err[m] = h * (hi - lo);
        }
    }
}

pub static DORMAND_PRINCE: Tableau = Tableau {
    name: "dopri5",
    c: &[0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0],
    a: &[
        &[],
        &[1.0 / 5.0],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
        &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
        &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ],
    b: &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0],
    b_low: &[
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ],
};

pub static FEHLBERG: Tableau = Tableau {
    name: "rkf45",
    c: &[0.0, 1.0 / 4.0, 3.0 / 8.0, 12.0 / 13.0, 1.0, 1.0 / 2.0],
    a: &[
        &[],
        &[1.0 / 4.0],
        &[3.0 / 32.0, 9.0 / 32.0],
        &[1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0],
        &[439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0],
        &[-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
    ],
    b: &[16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0],
    b_low: &[25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0],
};

pub static CASH_KARP: Tableau = Tableau {
    name: "cash-karp",
    c: &[0.0, 1.0 / 5.0, 3.0 / 10.0, 3.0 / 5.0, 1.0, 7.0 / 8.0],
    a: &[
        &[],
        &[1.0 / 5.0],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0],
        &[-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0],
        &[1631.0 / 55296.0, 175.0 / 512.0, 575.0 / 13824.0, 44275.0 / 110592.0, 253.0 / 4096.0],
    ],
    b: &[37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0],
    b_low: &[2825.0 / 27648.0, 0.0, 18575.0 / 48384.0, 13525.0 / 55296.0, 277.0 / 14336.0, 1.0 / 4.0],
};

pub struct MethodRegistry {
    methods: BTreeMap<&'static str, Arc<dyn StepMethod>>,
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut reg = MethodRegistry { methods: BTreeMap::new() };
        reg.register(Arc::new(&DORMAND_PRINCE));
        reg.register(Arc::new(&FEHLBERG));
        reg.register(Arc::new(&CASH_KARP));
        reg
    }
}

impl StepMethod for &'static Tableau {
    fn name(&self) -> &'static str {
        (*self).name()
    }
    fn error_order(&self) -> u32 {
        (*self).error_order()
    }
    fn step(&self, f: &mut dyn FnMut(f64, &[f64], &mut [f64]), t: f64, y: &[f64], h: f64, y_out: &mut [f64], err: &mut [f64]) {
        (*self).step(f, t, y, h, y_out, err)
    }
}

impl MethodRegistry {
    pub fn register(&mut self, method: Arc<dyn StepMethod>) {
        self.methods.insert(method.name(), method);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn StepMethod>> {
        self.methods.get(name).cloned().ok_or_else(|| Error::Unknown {
            kind: "step method",
            name: name.to_string(),
            available: self.methods.keys().copied().collect::<Vec<_>>().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consistent(t: &Tableau) {
        let sb: f64 = t.b.iter().sum();
        let sl: f64 = t.b_low.iter().sum();
        assert!((sb - 1.0).abs() < 1e-14 && (sl - 1.0).abs() < 1e-14, "{}", t.name);
        for (i, row) in t.a.iter().enumerate() {
            let s: f64 = row.iter().sum();
            assert!((s - t.c[i]).abs() < 1e-14, "{} row {i}", t.name);
        }
    }

    #[test]
    fn tableaus_are_consistent() {
        for t in [&DORMAND_PRINCE, &FEHLBERG, &CASH_KARP] {
            consistent(t);
        }
    }

    #[test]
    fn fifth_order_on_exponential() {
        let reg = MethodRegistry::default();
        for name in reg.names() {
            let m = reg.get(name).unwrap();
            let mut f = |_t: f64, y: &[f64], d: &mut [f64]| d[0] = -y[0];
            let run = |h: f64, f: &mut dyn FnMut(f64, &[f64], &mut [f64])| {
                let mut y = vec![1.0];
                let mut out = vec![0.0];
                let mut err = vec![0.0];
                let n = (1.0 / h).round() as usize;
                for i in 0..n {
                    m.step(f, i as f64 * h, &y, h, &mut out, &mut err);
                    y.copy_from_slice(&out);
                }
                (y[0] - (-1f64).exp()).abs()
            };
            let e1 = run(0.1, &mut f);
            let e2 = run(0.05, &mut f);
            let rate = (e1 / e2).log2();
            assert!(rate > 4.6, "{name}: observed order {rate}");
        }
        assert!(reg.get("euler").is_err());
    }
}
