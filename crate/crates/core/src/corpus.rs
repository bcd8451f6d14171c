//! Seeded synthetic corpus: jittered references plus a balanced labelled test
//! split built from the textured fixture.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{write_pgm, GrayImage, ImageError};
use crate::pipeline::TamperLabel;
use crate::synth::{
    add_uniform_noise, brightness_jitter, gaussian_blur, obstruct, rotate_image, textured_fixture,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Brightness offsets of the calibration references.
    pub reference_deltas: Vec<i32>,
    /// Test images generated for each of the four classes.
    pub per_class: usize,
    /// Range of brightness offsets applied to fresh normal frames.
    pub normal_delta_range: (i32, i32),
    pub noise_amplitude: u8,
    pub blur_sigma: f64,
    pub rotation_deg: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            seed: 2024,
            reference_deltas: vec![-60, -40, -20, 0, 20, 40, 60, 80],
            per_class: 40,
            normal_delta_range: (-50, 70),
            noise_amplitude: 3,
            blur_sigma: 4.0,
            rotation_deg: 90.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub name: String,
    pub label: TamperLabel,
    pub image: GrayImage,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub base: GrayImage,
    pub references: Vec<(String, GrayImage)>,
    pub samples: Vec<LabeledImage>,
}

impl Corpus {
    pub fn generate(spec: &CorpusSpec) -> Self {
        let base = textured_fixture(spec.width, spec.height, spec.seed);
        let references = spec
            .reference_deltas
            .iter()
            .enumerate()
            .map(|(i, &d)| (format!("ref_{i:02}.pgm"), brightness_jitter(&base, d)))
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7E57);
        let (lo, hi) = spec.normal_delta_range;
        let fresh_normal = |rng: &mut ChaCha8Rng| {
            let delta = rng.random_range(lo..=hi);
            let noise_seed = rng.random();
            add_uniform_noise(
                &brightness_jitter(&base, delta),
                spec.noise_amplitude,
                noise_seed,
            )
        };

        let mut samples = Vec::with_capacity(4 * spec.per_class);
        for label in TamperLabel::ALL {
            for i in 0..spec.per_class {
                let normal = fresh_normal(&mut rng);
                let image = match label {
                    TamperLabel::Normal => normal,
                    TamperLabel::Blurred => {
                        gaussian_blur(&normal, spec.blur_sigma).expect("non-negative sigma")
                    }
                    TamperLabel::Rotated => rotate_image(&normal, spec.rotation_deg),
                    TamperLabel::Obstructed => {
                        obstruct(&normal, rng.random(), 1.0).expect("full coverage")
                    }
                };
                samples.push(LabeledImage {
                    name: format!("{}_{i:03}.pgm", label.as_str()),
                    label,
                    image,
                });
            }
        }
        Self {
            base,
            references,
            samples,
        }
    }

    pub fn write_references(&self, dir: &Path) -> Result<(), ImageError> {
        create_dir(dir)?;
        for (name, img) in &self.references {
            write_pgm(&dir.join(name), img)?;
        }
        Ok(())
    }

    /// Writes the test split in the `<root>/<label>/<file>` dataset layout.
    pub fn write_dataset(&self, root: &Path) -> Result<(), ImageError> {
        for label in TamperLabel::ALL {
            create_dir(&root.join(label.as_str()))?;
        }
        for s in &self.samples {
            write_pgm(&root.join(s.label.as_str()).join(&s.name), &s.image)?;
        }
        Ok(())
    }
}

fn create_dir(dir: &Path) -> Result<(), ImageError> {
    std::fs::create_dir_all(dir).map_err(|e| ImageError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })
}
