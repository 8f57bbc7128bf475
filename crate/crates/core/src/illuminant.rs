//! Illuminant colours along the Planckian locus.
//!
//! CCT → CIE 1931 xy uses the Kim et al. cubic-spline fit of the locus
//! (valid 1667 K – 25000 K); xy → linear RGB uses the sRGB/Rec.709
//! primaries with a D65 white.

use crate::error::{Error, Result};

pub const CCT_MIN: f64 = 1667.0;
pub const CCT_MAX: f64 = 25000.0;

/// Chromaticity of a blackbody at `cct` kelvin.
pub fn planckian_xy(cct: f64) -> Result<(f64, f64)> {
    if !(CCT_MIN..=CCT_MAX).contains(&cct) {
        return Err(Error::OutOfRange {
            what: "correlated colour temperature",
            value: cct,
            lo: CCT_MIN,
            hi: CCT_MAX,
        });
    }
    let t = cct;
    let (t2, t3) = (t * t, t * t * t);
    let x = if t <= 4000.0 {
        -0.266_123_9e9 / t3 - 0.234_358_9e6 / t2 + 0.877_695_6e3 / t + 0.179_910
    } else {
        -3.025_846_9e9 / t3 + 2.107_037_9e6 / t2 + 0.222_634_7e3 / t + 0.240_390
    };
    let (x2, x3) = (x * x, x * x * x);
    let y = if t <= 2222.0 {
        -1.106_381_4 * x3 - 1.348_110_20 * x2 + 2.185_558_32 * x - 0.202_196_83
    } else if t <= 4000.0 {
        -0.954_947_6 * x3 - 1.374_185_93 * x2 + 2.091_370_15 * x - 0.167_488_67
    } else {
        3.081_758_0 * x3 - 5.873_386_70 * x2 + 3.751_129_97 * x - 0.370_014_83
    };
    Ok((x, y))
}

/// Linear sRGB for chromaticity `(x, y)` at unit luminance. Channels may be
/// negative for colours outside the sRGB gamut.
pub fn xy_to_linear_srgb(x: f64, y: f64) -> [f64; 3] {
    let big_x = x / y;
    let big_z = (1.0 - x - y) / y;
    let big_y = 1.0;
    [
        3.240_454_2 * big_x - 1.537_138_5 * big_y - 0.498_531_4 * big_z,
        -0.969_266_0 * big_x + 1.876_010_8 * big_y + 0.041_556_0 * big_z,
        0.055_643_4 * big_x - 0.204_025_9 * big_y + 1.057_225_2 * big_z,
    ]
}

/// Smallest channel value kept after gamut clipping; light colours must be
/// strictly positive.
const MIN_CHANNEL: f64 = 1e-3;

/// Light colour for a blackbody at `cct`, normalised so the largest channel
/// is exactly 1.
pub fn planckian_rgb(cct: f64) -> Result<[f32; 3]> {
    let (x, y) = planckian_xy(cct)?;
    let rgb = xy_to_linear_srgb(x, y).map(|c| c.max(MIN_CHANNEL));
    let max = rgb.iter().copied().fold(f64::MIN, f64::max);
    Ok(rgb.map(|c| if c == max { 1.0 } else { (c / max) as f32 }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratio(rgb: [f32; 3]) -> f32 {
        let max = rgb.iter().copied().fold(f32::MIN, f32::max);
        let min = rgb.iter().copied().fold(f32::MAX, f32::min);
        max / min
    }

    #[test]
    fn locus_matches_tabulated_chromaticities() {
        // CIE 1931 blackbody chromaticities (CIE 15 colorimetry tables).
        for (cct, tx, ty) in [
            (2856.0, 0.447_57, 0.407_45),
            (4000.0, 0.380_52, 0.376_72),
            (6500.0, 0.313_52, 0.323_63),
            (10000.0, 0.280_68, 0.288_42),
        ] {
            let (x, y) = planckian_xy(cct).unwrap();
            assert!((x - tx).abs() < 2e-3, "x at {cct}: {x} vs {tx}");
            assert!((y - ty).abs() < 2e-3, "y at {cct}: {y} vs {ty}");
        }
    }

    #[test]
    fn d65_white_is_neutral() {
        let rgb = xy_to_linear_srgb(0.3127, 0.3290);
        for c in rgb {
            assert!((c - 1.0).abs() < 2e-3, "{rgb:?}");
        }
    }

    #[test]
    fn daylight_is_nearly_neutral() {
        let rgb = planckian_rgb(6500.0).unwrap();
        assert!(ratio(rgb) < 1.15, "{rgb:?}");
        // the tabulated daylight white maps to a neutral colour as well
        let d65 = xy_to_linear_srgb(0.3127, 0.3290).map(|c| c as f32);
        assert!(ratio(d65) < 1.15);
    }

    #[test]
    fn warm_and_cool_ordering() {
        let warm = planckian_rgb(2500.0).unwrap();
        assert_eq!(warm[0], 1.0);
        assert!(warm[0] > warm[1] && warm[1] > warm[2]);
        let cool = planckian_rgb(10000.0).unwrap();
        assert_eq!(cool[2], 1.0);
        assert!(cool[2] > cool[1] && cool[1] > cool[0]);
    }

    #[test]
    fn valid_light_colours_over_domain() {
        let mut t = CCT_MIN;
        while t <= CCT_MAX {
            let rgb = planckian_rgb(t).unwrap();
            assert!(rgb.iter().all(|c| *c > 0.0 && *c <= 1.0), "{t}: {rgb:?}");
            assert!(rgb.contains(&1.0));
            t += 250.0;
        }
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(planckian_rgb(1000.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(planckian_rgb(30000.0), Err(Error::OutOfRange { .. })));
    }
}
