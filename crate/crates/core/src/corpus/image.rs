//! MIP-like synthetic PET images.
//!
//! A uniform body silhouette sits at the background level, the mediastinum and
//! liver are flat reference regions, and lesions are Gaussian blobs whose peak
//! intensity encodes the Deauville class relative to those references.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::types::{DeauvilleLabel, GrayscaleImage, IntensityAnchors};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lesion {
    pub row: usize,
    pub col: usize,
    pub sigma: f64,
    pub peak: f64,
}

/// Image plus the generator's record of where everything was drawn.
#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub image: GrayscaleImage,
    pub body_mask: Vec<bool>,
    pub mediastinum_mask: Vec<bool>,
    pub liver_mask: Vec<bool>,
    pub lesion_mask: Vec<bool>,
    pub lesions: Vec<Lesion>,
    pub anchors: IntensityAnchors,
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let dy = (y - self.cy) / self.ry;
        let dx = (x - self.cx) / self.rx;
        dy * dy + dx * dx <= 1.0
    }
}

const HEAD: Ellipse = Ellipse { cy: 0.1, cx: 0.5, ry: 0.08, rx: 0.09 };
const TORSO: Ellipse = Ellipse { cy: 0.45, cx: 0.5, ry: 0.3, rx: 0.24 };
const MEDIASTINUM: Ellipse = Ellipse { cy: 0.32, cx: 0.5, ry: 0.08, rx: 0.05 };
const LIVER: Ellipse = Ellipse { cy: 0.5, cx: 0.37, ry: 0.07, rx: 0.1 };
const LEGS: [(f64, f64, f64, f64); 2] = [(0.7, 1.0, 0.33, 0.47), (0.7, 1.0, 0.53, 0.67)];

fn in_body(y: f64, x: f64) -> bool {
    HEAD.contains(y, x)
        || TORSO.contains(y, x)
        || LEGS
            .iter()
            .any(|&(y0, y1, x0, x1)| y >= y0 && y <= y1 && x >= x0 && x <= x1)
}

/// Closed interval of admissible lesion peaks for a class, or `None` for score 1.
pub fn peak_range(label: DeauvilleLabel, anchors: &IntensityAnchors) -> Option<(f64, f64)> {
    let IntensityAnchors {
        background: b,
        mediastinum: m,
        liver: l,
        moderate_margin: d,
    } = *anchors;
    let gap = |lo: f64, hi: f64| ((hi - lo) * 0.1).min(0.02);
    match label.value() {
        1 => None,
        2 => Some((b + gap(b, m), m - gap(b, m))),
        3 => Some((m + gap(m, l), l)),
        4 => Some((l + gap(l, l + d), l + d)),
        _ => Some((l + d + gap(l + d, 1.0), 1.0)),
    }
}

pub fn generate_image(
    label: DeauvilleLabel,
    size: (usize, usize),
    seed: u64,
) -> Result<SyntheticImage> {
    generate_image_with(label, size, seed, &IntensityAnchors::default())
}

pub fn generate_image_with(
    label: DeauvilleLabel,
    size: (usize, usize),
    seed: u64,
    anchors: &IntensityAnchors,
) -> Result<SyntheticImage> {
    let (h, w) = size;
    if h < 16 || w < 16 {
        return Err(Error::validation(format!("image size {h}x{w} is below 16x16")));
    }
    anchors.validate()?;
    let mut rng = rng_from_seed(seed);

    let n = h * w;
    let mut pixels = vec![0.0; n];
    let mut body_mask = vec![false; n];
    let mut mediastinum_mask = vec![false; n];
    let mut liver_mask = vec![false; n];
    let norm = |r: usize, c: usize| ((r as f64 + 0.5) / h as f64, (c as f64 + 0.5) / w as f64);

    for r in 0..h {
        for c in 0..w {
            let (y, x) = norm(r, c);
            let i = r * w + c;
            if in_body(y, x) {
                body_mask[i] = true;
                pixels[i] = anchors.background;
            }
            if MEDIASTINUM.contains(y, x) {
                mediastinum_mask[i] = true;
                pixels[i] = anchors.mediastinum;
            } else if LIVER.contains(y, x) {
                liver_mask[i] = true;
                pixels[i] = anchors.liver;
            }
        }
    }

    let mut lesions = Vec::new();
    if let Some((lo, hi)) = peak_range(label, anchors) {
        let n_lesions = rng.gen_range(1..=3);
        let scale = h.min(w) as f64 / 64.0;
        for k in 0..n_lesions {
            // The first lesion carries the class; extra ones come from classes 2..=label.
            let (plo, phi) = if k == 0 {
                (lo, hi)
            } else {
                let extra = DeauvilleLabel::new(rng.gen_range(2..=label.value()))?;
                peak_range(extra, anchors).expect("classes >= 2 have a range")
            };
            let peak = rng.gen_range(plo..=phi);
            let sigma = rng.gen_range(1.0..2.0) * scale;
            let (row, col) = sample_lesion_site(&mut rng, h, w, &mediastinum_mask, &liver_mask);
            lesions.push(Lesion { row, col, sigma, peak });
        }
    }

    let mut lesion_mask = vec![false; n];
    for lesion in &lesions {
        let reach = (3.0 * lesion.sigma).ceil() as isize;
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let (r, c) = (lesion.row as isize + dr, lesion.col as isize + dc);
                if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                    continue;
                }
                let i = r as usize * w + c as usize;
                let d2 = (dr * dr + dc * dc) as f64;
                let v = lesion.peak * (-d2 / (2.0 * lesion.sigma * lesion.sigma)).exp();
                if v > pixels[i] {
                    pixels[i] = v;
                    lesion_mask[i] = true;
                }
            }
        }
    }

    Ok(SyntheticImage {
        image: GrayscaleImage::new(h, w, pixels)?,
        body_mask,
        mediastinum_mask,
        liver_mask,
        lesion_mask,
        lesions,
        anchors: *anchors,
    })
}

fn sample_lesion_site(
    rng: &mut Rng,
    h: usize,
    w: usize,
    mediastinum: &[bool],
    liver: &[bool],
) -> (usize, usize) {
    let margin = 3isize;
    let near_organ = |r: usize, c: usize| {
        for dr in -margin..=margin {
            for dc in -margin..=margin {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                    let i = rr as usize * w + cc as usize;
                    if mediastinum[i] || liver[i] {
                        return true;
                    }
                }
            }
        }
        false
    };
    let shrunk = Ellipse {
        ry: TORSO.ry * 0.85,
        rx: TORSO.rx * 0.85,
        ..TORSO
    };
    loop {
        let r = rng.gen_range(0..h);
        let c = rng.gen_range(0..w);
        let (y, x) = ((r as f64 + 0.5) / h as f64, (c as f64 + 0.5) / w as f64);
        if shrunk.contains(y, x) && !near_organ(r, c) {
            return (r, c);
        }
    }
}

/// Adds zero-mean Gaussian pixel noise and clamps back into `[0, 1]`.
pub fn add_noise(image: &GrayscaleImage, sigma: f64, rng: &mut Rng) -> GrayscaleImage {
    if sigma <= 0.0 {
        return image.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let mut out = image.clone();
    for r in 0..image.height() {
        for c in 0..image.width() {
            let v = image.get(r, c) + normal.sample(rng);
            out.set(r, c, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(v: u8) -> DeauvilleLabel {
        DeauvilleLabel::new(v).unwrap()
    }

    #[test]
    fn score_one_has_nothing_above_background() {
        let img = generate_image(label(1), (64, 64), 0).unwrap();
        let outside_organs = img
            .image
            .pixels()
            .iter()
            .zip(img.mediastinum_mask.iter().zip(&img.liver_mask))
            .filter(|(_, (m, l))| !**m && !**l)
            .map(|(p, _)| *p)
            .fold(0.0, f64::max);
        assert_eq!(outside_organs, img.anchors.background);
        assert!(img.lesions.is_empty());
    }

    #[test]
    fn score_three_peak_between_mediastinum_and_liver() {
        let img = generate_image(label(3), (64, 64), 1).unwrap();
        let a = img.anchors;
        let p = img.lesions[0].peak;
        assert!(a.mediastinum < p && p <= a.liver, "peak {p}");
        assert_eq!(img.image.get(img.lesions[0].row, img.lesions[0].col), p);
    }

    #[test]
    fn score_five_peak_from_lesion_mask() {
        let img = generate_image(label(5), (64, 64), 2).unwrap();
        let a = img.anchors;
        let peak = img
            .image
            .pixels()
            .iter()
            .zip(&img.lesion_mask)
            .filter(|(_, m)| **m)
            .map(|(p, _)| *p)
            .fold(0.0, f64::max);
        assert!(peak > a.liver + a.moderate_margin, "peak {peak}");
    }

    #[test]
    fn anchor_order_holds_and_rejects_tiny_sizes() {
        let img = generate_image(label(4), (32, 48), 5).unwrap();
        assert!(img.mediastinum_mask.iter().any(|m| *m));
        assert!(img.liver_mask.iter().any(|m| *m));
        assert!(generate_image(label(2), (15, 64), 0).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate_image(label(4), (64, 64), 11).unwrap();
        let b = generate_image(label(4), (64, 64), 11).unwrap();
        assert_eq!(a.image, b.image);
    }

    #[test]
    fn mean_peak_increases_with_score() {
        let means: Vec<f64> = (2..=5)
            .map(|v| {
                (0..200u64)
                    .map(|s| generate_image(label(v), (32, 32), 1000 + s).unwrap().lesions[0].peak)
                    .sum::<f64>()
                    / 200.0
            })
            .collect();
        assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
    }
}
