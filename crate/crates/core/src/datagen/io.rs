//! On-disk formats: caption JSON-lines, the vocabulary file and the binary feature cache.
//!
//! Feature cache layout (little-endian):
//!
//! ```text
//! "TCF1"
//! u32 modality (0 text, 1 image, 2 voxel)
//! u32 record count
//! u32 views per record (M)
//! u32 feature dim
//! per record: u16 id length, UTF-8 id, M·dim f32
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{tokenize, Vocabulary};
use super::{Dataset, DatasetRecord, Split};
use crate::error::{Error, Result};
use crate::space::Modality;

pub const FEATURE_CACHE_MAGIC: &[u8; 4] = b"TCF1";
pub const CAPTIONS_FILE: &str = "captions.jsonl";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const IMAGE_CACHE_FILE: &str = "image.tcf";
pub const VOXEL_CACHE_FILE: &str = "voxel.tcf";

/// One line of the caption file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionEntry {
    pub id: String,
    pub split: Split,
    pub captions: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

/// Parses caption JSON-lines. Blank lines are skipped; errors name the 1-based line.
pub fn parse_captions(text: &str, source_name: &str) -> Result<Vec<CaptionEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: CaptionEntry = serde_json::from_str(line).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

pub fn load_captions(path: impl AsRef<Path>) -> Result<Vec<CaptionEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_captions(&text, &path.display().to_string())
}

pub fn format_captions(entries: &[CaptionEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("caption entries always serialize"));
        out.push('\n');
    }
    out
}

/// Per-object feature vectors of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub modality: Modality,
    pub views_per_record: usize,
    pub dim: usize,
    /// `(object id, M feature vectors of length dim)`.
    pub records: Vec<(String, Vec<Vec<f32>>)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("feature cache", format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

impl FeatureCache {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(FEATURE_CACHE_MAGIC);
        let header = [
            self.modality.code(),
            u32::try_from(self.records.len()).map_err(|_| Error::invalid("too many records"))?,
            u32::try_from(self.views_per_record).map_err(|_| Error::invalid("too many views"))?,
            u32::try_from(self.dim).map_err(|_| Error::invalid("feature dim too large"))?,
        ];
        for h in header {
            out.extend_from_slice(&h.to_le_bytes());
        }
        for (id, views) in &self.records {
            let len = u16::try_from(id.len()).map_err(|_| Error::invalid(format!("object id too long: {id}")))?;
            if views.len() != self.views_per_record {
                return Err(Error::dim(format!("views of {id}"), self.views_per_record, views.len()));
            }
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in views {
                if v.len() != self.dim {
                    return Err(Error::dim(format!("features of {id}"), self.dim, v.len()));
                }
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != FEATURE_CACHE_MAGIC {
            return Err(Error::format("feature cache", "bad magic bytes"));
        }
        let code = r.u32()?;
        let modality = Modality::from_code(code)
            .ok_or_else(|| Error::format("feature cache", format!("unknown modality code {code}")))?;
        let count = r.u32()? as usize;
        let views = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let floats_per_record = views
            .checked_mul(dim)
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or_else(|| Error::format("feature cache", "record size overflows"))?;
        // Each record needs at least its 2-byte id length plus its floats.
        let min_record = 2 + floats_per_record * 4;
        if count.saturating_mul(min_record) > r.remaining() {
            return Err(Error::format(
                "feature cache",
                format!(
                    "header declares {count} records but only {} bytes follow",
                    r.remaining()
                ),
            ));
        }
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u16()? as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format("feature cache", "object id is not UTF-8"))?
                .to_string();
            let raw = r.take(floats_per_record * 4)?;
            let floats: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if let Some(bad) = floats.iter().find(|f| !f.is_finite()) {
                return Err(Error::format(
                    "feature cache",
                    format!("non-finite value {bad} for {id}"),
                ));
            }
            let per_view = if dim == 0 {
                vec![Vec::new(); views]
            } else {
                floats.chunks_exact(dim).map(<[f32]>::to_vec).collect()
            };
            records.push((id, per_view));
        }
        if r.remaining() != 0 {
            return Err(Error::format(
                "feature cache",
                format!("{} trailing bytes", r.remaining()),
            ));
        }
        Ok(Self {
            modality,
            views_per_record: views,
            dim,
            records,
        })
    }
}

fn cache_from_records(
    records: &[DatasetRecord],
    modality: Modality,
    views_of: impl Fn(&DatasetRecord) -> Vec<&[f64]>,
) -> FeatureCache {
    let first = records.first().map(&views_of).unwrap_or_default();
    FeatureCache {
        modality,
        views_per_record: first.len(),
        dim: first.first().map_or(0, |v| v.len()),
        records: records
            .iter()
            .map(|r| {
                let views = views_of(r)
                    .into_iter()
                    .map(|v| v.iter().map(|&x| x as f32).collect())
                    .collect();
                (r.object_id.clone(), views)
            })
            .collect(),
    }
}

/// Writes captions, vocabulary and the image/voxel feature caches into `dir`.
pub fn write_dataset_dir(dir: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let entries: Vec<CaptionEntry> = dataset
        .records
        .iter()
        .map(|r| CaptionEntry {
            id: r.object_id.clone(),
            split: r.split,
            captions: r.captions.iter().map(|c| dataset.vocab.detokenize(c)).collect(),
            category: Some(r.category.clone()),
        })
        .collect();
    fs::write(dir.join(CAPTIONS_FILE), format_captions(&entries))?;
    fs::write(dir.join(VOCAB_FILE), dataset.vocab.to_file_string())?;
    let image = cache_from_records(&dataset.records, Modality::Image, |r| {
        r.view_features.iter().map(Vec::as_slice).collect()
    });
    let voxel = cache_from_records(&dataset.records, Modality::Voxel, |r| vec![&r.voxel_features[..]]);
    fs::write(dir.join(IMAGE_CACHE_FILE), image.encode()?)?;
    fs::write(dir.join(VOXEL_CACHE_FILE), voxel.encode()?)?;
    Ok(())
}

fn read_cache(path: &Path, expect: Modality) -> Result<HashMap<String, Vec<Vec<f64>>>> {
    let cache = FeatureCache::decode(&fs::read(path)?).map_err(|e| match e {
        Error::Format { format, msg } => Error::Format {
            format,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })?;
    if cache.modality != expect {
        return Err(Error::invalid(format!(
            "{} holds {} features, expected {expect}",
            path.display(),
            cache.modality
        )));
    }
    let mut map = HashMap::with_capacity(cache.records.len());
    for (id, views) in cache.records {
        let views = views
            .into_iter()
            .map(|v| v.into_iter().map(f64::from).collect())
            .collect();
        if map.insert(id.clone(), views).is_some() {
            return Err(Error::invalid(format!("{}: duplicate id {id}", path.display())));
        }
    }
    Ok(map)
}

/// Loads a dataset directory written by [`write_dataset_dir`] (or assembled by hand
/// in the same formats), tokenizing captions to `max_caption_len`.
pub fn load_dataset_dir(dir: impl AsRef<Path>, max_caption_len: usize) -> Result<Dataset> {
    let dir = dir.as_ref();
    let vocab_path = dir.join(VOCAB_FILE);
    let vocab = Vocabulary::parse(&fs::read_to_string(&vocab_path)?, &vocab_path.display().to_string())?;
    let entries = load_captions(dir.join(CAPTIONS_FILE))?;
    let mut images = read_cache(&dir.join(IMAGE_CACHE_FILE), Modality::Image)?;
    let mut voxels = read_cache(&dir.join(VOXEL_CACHE_FILE), Modality::Voxel)?;
    let mut records = Vec::with_capacity(entries.len());
    for e in entries {
        let view_features = images
            .remove(&e.id)
            .ok_or_else(|| Error::invalid(format!("object {} has no image features", e.id)))?;
        let mut voxel = voxels
            .remove(&e.id)
            .ok_or_else(|| Error::invalid(format!("object {} has no voxel features", e.id)))?;
        if voxel.len() != 1 {
            return Err(Error::invalid(format!(
                "object {}: voxel cache must hold one view",
                e.id
            )));
        }
        let captions = e
            .captions
            .iter()
            .map(|c| {
                tokenize(c, &vocab, max_caption_len).map_err(|err| Error::invalid(format!("object {}: {err}", e.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(DatasetRecord {
            object_id: e.id,
            category: e.category.unwrap_or_default(),
            split: e.split,
            captions,
            voxel_features: voxel.pop().unwrap(),
            view_features,
        });
    }
    Dataset::new(vocab, records, max_caption_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_synthetic_dataset, SyntheticSpec};
    use proptest::prelude::*;

    #[test]
    fn captions_parse_examples() {
        let text = r#"{"id":"a","split":"train","captions":[["red","chair"]]}
{"id":"b","split":"val","captions":[["blue","table"],["a","table"]]}
{"id":"c","split":"test","captions":[["x"]],"category":"chair"}
"#;
        let entries = parse_captions(text, "mem").unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[1].id, "b");
        assert_eq!(entries[1].captions.len(), 2);
        assert_eq!(entries[2].category.as_deref(), Some("chair"));
        assert!(parse_captions("", "mem").unwrap().is_empty());
    }

    #[test]
    fn caption_errors_name_the_line() {
        let text = "{\"id\":\"a\",\"split\":\"train\",\"captions\":[]}\n{\"split\":\"val\",\"captions\":[]}\n";
        let err = parse_captions(text, "caps.jsonl").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("caps.jsonl: line 2"), "{msg}");
        assert!(msg.contains("id"), "{msg}");
        assert!(parse_captions("{\"id\":\"a\",\"split\":\"dev\",\"captions\":[]}", "m").is_err());
    }

    #[test]
    fn feature_cache_header_layout() {
        let cache = FeatureCache {
            modality: Modality::Image,
            views_per_record: 2,
            dim: 1,
            records: vec![("ab".into(), vec![vec![1.0], vec![-2.0]])],
        };
        let bytes = cache.encode().unwrap();
        assert_eq!(&bytes[..4], b"TCF1");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1u32.to_le_bytes());
        assert_eq!(&bytes[20..22], &2u16.to_le_bytes());
        assert_eq!(&bytes[22..24], b"ab");
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[28..32], &(-2.0f32).to_le_bytes());
        assert_eq!(bytes.len(), 32);
        assert_eq!(FeatureCache::decode(&bytes).unwrap(), cache);
    }

    #[test]
    fn feature_cache_rejects_garbage() {
        assert!(FeatureCache::decode(b"").is_err());
        assert!(FeatureCache::decode(b"TCF2\0\0\0\0").is_err());
        let mut huge = b"TCF1".to_vec();
        for v in [1u32, u32::MAX, u32::MAX, u32::MAX] {
            huge.extend_from_slice(&v.to_le_bytes());
        }
        assert!(FeatureCache::decode(&huge).is_err());
        let mut bad_mod = b"TCF1".to_vec();
        for v in [9u32, 0, 0, 0] {
            bad_mod.extend_from_slice(&v.to_le_bytes());
        }
        assert!(FeatureCache::decode(&bad_mod).is_err());
    }

    #[test]
    fn dataset_dir_roundtrip() {
        let spec = SyntheticSpec {
            n_objects: 20,
            noise: 0.2,
            ..SyntheticSpec::default()
        };
        let (records, vocab) = generate_synthetic_dataset(&spec, 4).unwrap();
        let ds = Dataset::new(vocab, records, spec.max_caption_len).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset_dir(dir.path(), &ds).unwrap();
        let back = load_dataset_dir(dir.path(), spec.max_caption_len).unwrap();
        assert_eq!(back, ds);
    }

    proptest! {
        #[test]
        fn feature_cache_decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..128)) {
            let mut data = b"TCF1".to_vec();
            data.extend(bytes);
            let _ = FeatureCache::decode(&data);
        }

        #[test]
        fn feature_cache_roundtrip(
            views in 1usize..4,
            dim in 0usize..5,
            ids in prop::collection::vec("[a-z0-9_]{0,12}", 0..6),
            seed in any::<u64>(),
        ) {
            let mut rng = crate::rng::rng_stream(seed, "cache");
            let records = ids
                .into_iter()
                .map(|id| {
                    let v = (0..views).map(|_| (0..dim).map(|_| rng.normal() as f32).collect()).collect();
                    (id, v)
                })
                .collect();
            let cache = FeatureCache { modality: Modality::Voxel, views_per_record: views, dim, records };
            prop_assert_eq!(FeatureCache::decode(&cache.encode().unwrap()).unwrap(), cache);
        }
    }
}
