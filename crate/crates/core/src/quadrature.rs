//! Globally adaptive Gauss–Kronrod (7/15) integration on a finite interval.
//!
//! The interval is first split at caller-supplied breakpoints; the panel
//! with the largest error estimate is then bisected until the summed error
//! estimate falls below `max(abs_tol, rel_tol * |I|)`.

use crate::error::{Error, Result};
use crate::real::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights at the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_panels: usize,
}

impl<T: Real> Default for QuadratureOptions<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::tol(1e-15),
            rel_tol: T::tol(1e-12),
            max_panels: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult<T> {
    pub value: T,
    pub error: T,
    pub panels: usize,
}

#[derive(Clone, Copy)]
struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn gk15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(center);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half_len * T::lit(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + T::lit(WGK[j]) * pair;
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * pair;
        }
    }
    let value = kronrod * half_len;
    let error = ((kronrod - gauss) * half_len).abs();
    (value, error)
}

/// Integrate `f` over `[a, b]` with the interior `breakpoints` used as initial panel edges.
pub fn integrate<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    breakpoints: &[T],
    opts: QuadratureOptions<T>,
) -> Result<QuadratureResult<T>> {
    if !(a < b) {
        return Err(Error::InvalidArgument(format!(
            "integration bounds must satisfy a < b (got {a}, {b})"
        )));
    }
    let mut edges: Vec<T> = Vec::with_capacity(breakpoints.len() + 2);
    edges.push(a);
    edges.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
    edges.push(b);
    edges.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    edges.dedup_by(|x, y| (*x - *y).abs() <= T::epsilon() * (x.abs() + y.abs()));

    let mut panels: Vec<Panel<T>> = edges
        .windows(2)
        .map(|w| {
            let (value, error) = gk15(&mut f, w[0], w[1]);
            Panel { a: w[0], b: w[1], value, error }
        })
        .collect();

    loop {
        let value = panels.iter().fold(T::zero(), |s, p| s + p.value);
        let error = panels.iter().fold(T::zero(), |s, p| s + p.error);
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::NonFinite("quadrature"));
        }
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= target {
            return Ok(QuadratureResult { value, error, panels: panels.len() });
        }
        if panels.len() >= opts.max_panels {
            return Err(Error::Quadrature { value: value.as_f64(), error: error.as_f64() });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, be), (i, p)| {
                if p.error > be {
                    (i, p.error)
                } else {
                    (bi, be)
                }
            });
        let p = panels[worst];
        let mid = T::lit(0.5) * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // panel cannot be split any further at this precision
            return Ok(QuadratureResult { value, error, panels: panels.len() });
        }
        let (lv, le) = gk15(&mut f, p.a, mid);
        let (rv, re) = gk15(&mut f, mid, p.b);
        panels[worst] = Panel { a: p.a, b: mid, value: lv, error: le };
        panels.push(Panel { a: mid, b: p.b, value: rv, error: re });
    }
}
