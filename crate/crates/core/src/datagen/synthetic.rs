//! Procedural trimodal dataset with known ground-truth alignment.
//!
//! Each object draws a category, color, size level and one flag per category
//! part, uniformly and independently. Raw features are one-hot attribute
//! blocks `[category | color | size | part slots (present, absent)]` plus
//! Gaussian noise of scale `noise`. Voxel features weight the color block by
//! `voxel_color_gain`; view features weight the size and part blocks by
//! `view_shape_gain`, so the two shape modalities carry complementary
//! evidence. Every view also appends `(cos θ, sin θ)` for its camera angle
//! `θ = φ + 2πm/M` with a per-object random yaw `φ`; mean pooling over the M
//! evenly spaced views cancels it. Features are rounded to `f32` so a round
//! trip through the on-disk cache is lossless.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::vocab::{tokenize, Vocabulary};
use super::{DatasetRecord, Split};
use crate::error::{Error, Result};
use crate::rng::{rng_stream, Rng};

pub const COLOR_NAMES: [&str; 12] = [
    "red", "blue", "green", "yellow", "black", "white", "brown", "gray", "orange", "purple", "pink", "beige",
];

pub const SIZE_NAMES: [&str; 6] = ["tiny", "small", "medium", "large", "huge", "giant"];

const FILLER_WORDS: [&str; 5] = ["a", "the", "that", "is", "and"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartSpec {
    /// Word used when the part is present, e.g. `arms`.
    pub present: String,
    /// Word used when it is absent, e.g. `armless`.
    pub absent: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategorySpec {
    pub name: String,
    #[serde(default)]
    pub parts: Vec<PartSpec>,
}

fn part(present: &str, absent: &str) -> PartSpec {
    PartSpec {
        present: present.into(),
        absent: absent.into(),
    }
}

fn default_categories() -> Vec<CategorySpec> {
    vec![
        CategorySpec {
            name: "chair".into(),
            parts: vec![
                part("arms", "armless"),
                part("wheels", "wheelless"),
                part("cushion", "uncushioned"),
            ],
        },
        CategorySpec {
            name: "table".into(),
            parts: vec![
                part("drawers", "drawerless"),
                part("shelf", "shelfless"),
                part("round", "rectangular"),
            ],
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_objects: usize,
    pub categories: Vec<CategorySpec>,
    /// Number of palette colors used, at most 12.
    pub colors: usize,
    /// Number of size levels used, at most 6.
    pub size_levels: usize,
    /// Rendered views per object (M).
    pub views_per_object: usize,
    /// Nominal voxel resolution r_v; metadata only.
    pub voxel_resolution: usize,
    /// Nominal image resolution r_i; metadata only.
    pub image_resolution: usize,
    /// Gaussian feature noise scale.
    pub noise: f64,
    pub captions_per_object: usize,
    /// Train, val and test fractions.
    pub split_fractions: [f64; 3],
    pub max_caption_len: usize,
    /// Probability that a caption omits each of the color, size and part mentions.
    pub mention_dropout: f64,
    pub voxel_color_gain: f64,
    pub view_shape_gain: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_objects: 500,
            categories: default_categories(),
            colors: 8,
            size_levels: 4,
            views_per_object: 6,
            voxel_resolution: 64,
            image_resolution: 128,
            noise: 0.0,
            captions_per_object: 5,
            split_fractions: [0.8, 0.1, 0.1],
            max_caption_len: 32,
            mention_dropout: 0.0,
            voxel_color_gain: 0.5,
            view_shape_gain: 0.5,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("synthetic spec: {msg}")));
        if self.n_objects == 0 {
            return bad("n_objects must be positive".into());
        }
        if self.n_objects < Split::ALL.len() {
            return bad(format!(
                "n_objects ({}) is smaller than the number of splits",
                self.n_objects
            ));
        }
        if self.categories.is_empty() {
            return bad("at least one category is required".into());
        }
        if self.colors == 0 || self.colors > COLOR_NAMES.len() {
            return bad(format!("colors must be in 1..={}", COLOR_NAMES.len()));
        }
        if self.size_levels == 0 || self.size_levels > SIZE_NAMES.len() {
            return bad(format!("size_levels must be in 1..={}", SIZE_NAMES.len()));
        }
        if self.views_per_object == 0 {
            return bad("views_per_object must be positive".into());
        }
        if self.captions_per_object == 0 {
            return bad("captions_per_object must be positive".into());
        }
        if self.max_caption_len == 0 {
            return bad("max_caption_len must be positive".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be a finite nonnegative number".into());
        }
        if !(0.0..1.0).contains(&self.mention_dropout) {
            return bad("mention_dropout must be in [0, 1)".into());
        }
        if self.split_fractions.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            return bad("split fractions must be nonnegative".into());
        }
        let sum: f64 = self.split_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions sum to {sum}, not 1"));
        }
        for g in [self.voxel_color_gain, self.view_shape_gain] {
            if !(g > 0.0 && g.is_finite()) {
                return bad("modality gains must be positive".into());
            }
        }
        for c in &self.categories {
            let words = std::iter::once(&c.name).chain(c.parts.iter().flat_map(|p| [&p.present, &p.absent]));
            for w in words {
                if w.is_empty() || w.chars().any(char::is_whitespace) {
                    return bad(format!("invalid category or part word {w:?}"));
                }
            }
        }
        Ok(())
    }

    fn max_parts(&self) -> usize {
        self.categories.iter().map(|c| c.parts.len()).max().unwrap_or(0)
    }

    /// Length of a voxel feature vector.
    pub fn voxel_dim(&self) -> usize {
        self.categories.len() + self.colors + self.size_levels + 2 * self.max_parts()
    }

    /// Length of one view feature vector.
    pub fn view_dim(&self) -> usize {
        self.voxel_dim() + 2
    }

    /// The fixed vocabulary: fillers, categories, colors, sizes, part words.
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        let mut words: Vec<&str> = FILLER_WORDS.to_vec();
        words.extend(self.categories.iter().map(|c| c.name.as_str()));
        words.extend(&COLOR_NAMES[..self.colors]);
        words.extend(&SIZE_NAMES[..self.size_levels]);
        for c in &self.categories {
            for p in &c.parts {
                words.push(&p.present);
                words.push(&p.absent);
            }
        }
        Vocabulary::from_words_dedup(words)
    }
}

/// Sampled attributes of one synthetic object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObjectAttributes {
    pub category: usize,
    pub color: usize,
    pub size: usize,
    pub parts: Vec<bool>,
}

/// Largest-remainder apportionment of `n` items over `fractions`.
/// Ties in the remainder go to the earlier entry.
pub fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn round_f32(v: f64) -> f64 {
    f64::from(v as f32)
}

fn attribute_code(spec: &SyntheticSpec, a: &ObjectAttributes, color_gain: f64, shape_gain: f64) -> Vec<f64> {
    let mut code = vec![0.0; spec.voxel_dim()];
    code[a.category] = 1.0;
    let mut off = spec.categories.len();
    code[off + a.color] = color_gain;
    off += spec.colors;
    code[off + a.size] = shape_gain;
    off += spec.size_levels;
    for (slot, &present) in a.parts.iter().enumerate() {
        code[off + 2 * slot + usize::from(!present)] = shape_gain;
    }
    code
}

fn caption_words(spec: &SyntheticSpec, a: &ObjectAttributes, rng: &mut Rng) -> Vec<String> {
    let cat = &spec.categories[a.category];
    let mut keep = || !rng.bernoulli(spec.mention_dropout);
    let color = keep().then(|| COLOR_NAMES[a.color]);
    let size = keep().then(|| SIZE_NAMES[a.size]);
    let parts: Vec<&str> = if keep() {
        cat.parts
            .iter()
            .zip(&a.parts)
            .map(|(p, &on)| if on { p.present.as_str() } else { p.absent.as_str() })
            .collect()
    } else {
        Vec::new()
    };
    let template = rng.below(3);
    let mut words: Vec<&str> = Vec::new();
    match template {
        // "a <color> <size> <category> <parts>"
        0 => {
            words.push("a");
            words.extend(color);
            words.extend(size);
            words.push(&cat.name);
        }
        // "<size> <category> that is <color> <parts>"
        1 => {
            words.extend(size);
            words.push(&cat.name);
            if let Some(c) = color {
                words.extend(["that", "is", c]);
            }
        }
        // "the <category> is <size> and <color> <parts>"
        _ => {
            words.extend(["the", cat.name.as_str()]);
            match (size, color) {
                (Some(s), Some(c)) => words.extend(["is", s, "and", c]),
                (Some(x), None) | (None, Some(x)) => words.extend(["is", x]),
                (None, None) => {}
            }
        }
    }
    words.extend(parts);
    words.into_iter().map(str::to_string).collect()
}

/// Generates the dataset and returns each object's sampled attributes alongside.
pub fn generate_synthetic_with_attributes(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(Vec<DatasetRecord>, Vocabulary, Vec<ObjectAttributes>)> {
    spec.validate()?;
    let vocab = spec.vocabulary()?;
    let mut attr_rng = rng_stream(seed, "synthetic/attributes");
    let mut noise_rng = rng_stream(seed, "synthetic/noise");
    let mut caption_rng = rng_stream(seed, "synthetic/captions");
    let mut split_rng = rng_stream(seed, "synthetic/split");

    let mut order: Vec<usize> = (0..spec.n_objects).collect();
    split_rng.shuffle(&mut order);
    let counts = apportion(spec.n_objects, &spec.split_fractions);
    let mut splits = vec![Split::Train; spec.n_objects];
    let mut pos = 0;
    for (split, &count) in Split::ALL.iter().zip(&counts) {
        for &obj in &order[pos..pos + count] {
            splits[obj] = *split;
        }
        pos += count;
    }

    let m = spec.views_per_object;
    let mut records = Vec::with_capacity(spec.n_objects);
    let mut attributes = Vec::with_capacity(spec.n_objects);
    for (i, &split) in splits.iter().enumerate() {
        let category = attr_rng.below(spec.categories.len());
        let color = attr_rng.below(spec.colors);
        let size = attr_rng.below(spec.size_levels);
        let parts: Vec<bool> = (0..spec.categories[category].parts.len())
            .map(|_| attr_rng.bernoulli(0.5))
            .collect();
        let yaw = attr_rng.uniform_range(0.0, TAU);
        let attrs = ObjectAttributes {
            category,
            color,
            size,
            parts,
        };

        let voxel_code = attribute_code(spec, &attrs, spec.voxel_color_gain, 1.0);
        let view_code = attribute_code(spec, &attrs, 1.0, spec.view_shape_gain);
        let voxel_features: Vec<f64> = voxel_code
            .iter()
            .map(|c| round_f32(c + spec.noise * noise_rng.normal()))
            .collect();
        let view_features: Vec<Vec<f64>> = (0..m)
            .map(|v| {
                let theta = yaw + TAU * v as f64 / m as f64;
                view_code
                    .iter()
                    .copied()
                    .chain([theta.cos(), theta.sin()])
                    .map(|c| round_f32(c + spec.noise * noise_rng.normal()))
                    .collect()
            })
            .collect();

        let captions = (0..spec.captions_per_object)
            .map(|_| {
                tokenize(
                    &caption_words(spec, &attrs, &mut caption_rng),
                    &vocab,
                    spec.max_caption_len,
                )
            })
            .collect::<Result<Vec<_>>>()?;

        records.push(DatasetRecord {
            object_id: format!("obj_{i:05}"),
            category: spec.categories[category].name.clone(),
            split,
            captions,
            voxel_features,
            view_features,
        });
        attributes.push(attrs);
    }
    Ok((records, vocab, attributes))
}

pub fn generate_synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> Result<(Vec<DatasetRecord>, Vocabulary)> {
    generate_synthetic_with_attributes(spec, seed).map(|(r, v, _)| (r, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::PAD_ID;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            n_objects: 60,
            ..SyntheticSpec::default()
        }
    }

    fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    #[test]
    fn apportion_by_enumeration() {
        assert_eq!(apportion(100, &[0.8, 0.1, 0.1]), vec![80, 10, 10]);
        assert_eq!(apportion(10, &[0.5, 0.25, 0.25]), vec![5, 3, 2]);
        for n in 3..200 {
            let c = apportion(n, &[0.7, 0.15, 0.15]);
            assert_eq!(c.iter().sum::<usize>(), n);
            // each count within one of its quota
            for (ci, f) in c.iter().zip([0.7, 0.15, 0.15]) {
                assert!((*ci as f64 - f * n as f64).abs() < 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn split_sizes_match_apportionment() {
        let spec = SyntheticSpec {
            n_objects: 100,
            ..SyntheticSpec::default()
        };
        let (records, _) = generate_synthetic_dataset(&spec, 3).unwrap();
        let count = |s| records.iter().filter(|r| r.split == s).count();
        assert_eq!(
            (count(Split::Train), count(Split::Val), count(Split::Test)),
            (80, 10, 10)
        );
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = small_spec();
        let a = generate_synthetic_dataset(&spec, 11).unwrap();
        let b = generate_synthetic_dataset(&spec, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_dataset(&spec, 12).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn too_few_objects_rejected() {
        let spec = SyntheticSpec {
            n_objects: 2,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic_dataset(&spec, 0).is_err());
        let spec = SyntheticSpec {
            split_fractions: [0.5, 0.5, 0.5],
            ..SyntheticSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn noise_free_identical_attributes_share_voxel_features() {
        let spec = SyntheticSpec {
            n_objects: 200,
            ..SyntheticSpec::default()
        };
        let (records, _, attrs) = generate_synthetic_with_attributes(&spec, 5).unwrap();
        let mut pairs = 0;
        for i in 0..records.len() {
            for j in i + 1..records.len() {
                if attrs[i] == attrs[j] {
                    pairs += 1;
                    assert_eq!(records[i].voxel_features, records[j].voxel_features);
                } else {
                    assert_ne!(records[i].voxel_features, records[j].voxel_features);
                }
            }
        }
        assert!(pairs > 0, "expected at least one attribute collision in 200 objects");
    }

    #[test]
    fn noise_free_nearest_neighbor_has_same_attributes() {
        let spec = SyntheticSpec {
            n_objects: 200,
            ..SyntheticSpec::default()
        };
        let (records, _, attrs) = generate_synthetic_with_attributes(&spec, 9).unwrap();
        let pooled: Vec<Vec<f64>> = records
            .iter()
            .map(|r| {
                let m = r.view_features.len() as f64;
                let mut mean = vec![0.0; r.view_features[0].len()];
                for v in &r.view_features {
                    for (a, b) in mean.iter_mut().zip(v) {
                        *a += b / m;
                    }
                }
                mean
            })
            .collect();
        for i in 0..records.len() {
            if !(0..records.len()).any(|j| j != i && attrs[j] == attrs[i]) {
                continue;
            }
            for feats in [
                records.iter().map(|r| r.voxel_features.clone()).collect::<Vec<_>>(),
                pooled.clone(),
            ] {
                let nn = (0..records.len())
                    .filter(|&j| j != i)
                    .min_by(|&a, &b| {
                        sq_dist(&feats[i], &feats[a])
                            .partial_cmp(&sq_dist(&feats[i], &feats[b]))
                            .unwrap()
                    })
                    .unwrap();
                assert_eq!(attrs[nn], attrs[i]);
            }
        }
    }

    #[test]
    fn captions_name_the_attributes() {
        let spec = small_spec();
        let (records, vocab, attrs) = generate_synthetic_with_attributes(&spec, 1).unwrap();
        for (r, a) in records.iter().zip(&attrs) {
            assert_eq!(r.captions.len(), spec.captions_per_object);
            assert_eq!(r.view_features.len(), spec.views_per_object);
            assert_eq!(r.view_features[0].len(), spec.view_dim());
            assert_eq!(r.voxel_features.len(), spec.voxel_dim());
            for c in &r.captions {
                assert_eq!(c.len(), spec.max_caption_len);
                assert_ne!(c[0], PAD_ID);
                let words = vocab.detokenize(c);
                assert!(words.contains(&COLOR_NAMES[a.color].to_string()));
                assert!(words.contains(&SIZE_NAMES[a.size].to_string()));
                assert!(words.contains(&r.category));
            }
        }
    }

    #[test]
    fn features_are_f32_exact() {
        let spec = SyntheticSpec {
            noise: 0.3,
            ..small_spec()
        };
        let (records, _) = generate_synthetic_dataset(&spec, 2).unwrap();
        for r in &records {
            for v in r.voxel_features.iter().chain(r.view_features.iter().flatten()) {
                assert_eq!(*v, f64::from(*v as f32));
            }
        }
    }
}
