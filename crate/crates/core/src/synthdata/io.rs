//! Dataset container: a magic prefix, a UTF-8 JSON header describing every
//! example, then raw little-endian f64 pixel blocks at header-declared
//! offsets (relative to the end of the header).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numeric::Tensor;

use super::{DataError, LabeledExample};

const MAGIC: &[u8; 4] = b"GCDS";
const FORMAT_VERSION: u32 = 1;

/// Suite-level metadata carried in the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub classes: usize,
    pub size: usize,
    pub seed: u64,
}

/// A named collection of example lists, typically one per condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub conditions: BTreeMap<String, Vec<LabeledExample>>,
}

#[derive(Serialize, Deserialize)]
struct ExampleMeta {
    image_id: String,
    shape_label: usize,
    texture_label: usize,
    condition: String,
    level: f64,
}

#[derive(Serialize, Deserialize)]
struct ConditionBlock {
    name: String,
    /// Byte offset of this condition's pixel block, relative to data start.
    offset: u64,
    /// Byte length of the pixel block.
    length: u64,
    examples: Vec<ExampleMeta>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    classes: usize,
    size: usize,
    seed: u64,
    conditions: Vec<ConditionBlock>,
}

/// Writes the dataset; the round-trip through [`load_dataset`] is lossless
/// down to pixel bits.
pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<(), DataError> {
    let pixels_per_image = dataset.meta.size * dataset.meta.size * 3;
    let mut blocks: Vec<ConditionBlock> = Vec::new();
    let mut data: Vec<u8> = Vec::new();
    for (name, examples) in &dataset.conditions {
        let offset = data.len() as u64;
        let mut metas = Vec::with_capacity(examples.len());
        for ex in examples {
            if ex.image.len() != pixels_per_image {
                return Err(DataError::Malformed(format!(
                    "example {} has {} pixels, expected {}",
                    ex.image_id,
                    ex.image.len(),
                    pixels_per_image
                )));
            }
            for v in ex.image.data() {
                data.extend_from_slice(&v.to_le_bytes());
            }
            metas.push(ExampleMeta {
                image_id: ex.image_id.clone(),
                shape_label: ex.shape_label,
                texture_label: ex.texture_label,
                condition: ex.condition.clone(),
                level: ex.level,
            });
        }
        blocks.push(ConditionBlock {
            name: name.clone(),
            offset,
            length: data.len() as u64 - offset,
            examples: metas,
        });
    }
    let header = Header {
        version: FORMAT_VERSION,
        classes: dataset.meta.classes,
        size: dataset.meta.size,
        seed: dataset.meta.seed,
        conditions: blocks,
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| DataError::Malformed(format!("header encode: {e}")))?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&FORMAT_VERSION.to_le_bytes())?;
    file.write_all(&(header_json.len() as u64).to_le_bytes())?;
    file.write_all(&header_json)?;
    file.write_all(&data)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| DataError::Malformed("file shorter than magic".into()))?;
    if &magic != MAGIC {
        return Err(DataError::Malformed("bad magic".into()));
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word)
        .map_err(|_| DataError::Malformed("missing version".into()))?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(DataError::Version {
            got: version,
            expected: FORMAT_VERSION,
        });
    }
    let mut len = [0u8; 8];
    file.read_exact(&mut len)
        .map_err(|_| DataError::Malformed("missing header length".into()))?;
    let header_len = u64::from_le_bytes(len) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)
        .map_err(|_| DataError::Malformed("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| DataError::Malformed(format!("header parse: {e}")))?;
    let mut data = Vec::new();
    file.read_to_end(&mut data)?;

    let pixels_per_image = header.size * header.size * 3;
    let mut conditions = BTreeMap::new();
    for block in header.conditions {
        let lo = block.offset as usize;
        let hi = lo + block.length as usize;
        if hi > data.len() {
            return Err(DataError::Malformed(format!(
                "block '{}' extends past end of file",
                block.name
            )));
        }
        let expected = block.examples.len() * pixels_per_image * 8;
        if block.length as usize != expected {
            return Err(DataError::Malformed(format!(
                "block '{}' has {} bytes, expected {expected}",
                block.name, block.length
            )));
        }
        let mut examples = Vec::with_capacity(block.examples.len());
        for (i, meta) in block.examples.into_iter().enumerate() {
            let start = lo + i * pixels_per_image * 8;
            let mut pixels = Vec::with_capacity(pixels_per_image);
            for p in 0..pixels_per_image {
                let at = start + p * 8;
                let bytes: [u8; 8] = data[at..at + 8].try_into().expect("bounds checked");
                let v = f64::from_le_bytes(bytes);
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(DataError::Malformed(format!(
                        "pixel {p} of {} outside [0,1]",
                        meta.image_id
                    )));
                }
                pixels.push(v);
            }
            examples.push(LabeledExample {
                image: Tensor::new(vec![header.size, header.size, 3], pixels)?,
                shape_label: meta.shape_label,
                texture_label: meta.texture_label,
                condition: meta.condition,
                level: meta.level,
                image_id: meta.image_id,
            });
        }
        conditions.insert(block.name, examples);
    }
    Ok(Dataset {
        meta: DatasetMeta {
            version,
            classes: header.classes,
            size: header.size,
            seed: header.seed,
        },
        conditions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{build_benchmark, BenchmarkConfig};

    fn sample_dataset() -> Dataset {
        let config = BenchmarkConfig {
            classes: 2,
            examples_per_class: 2,
            conditions: vec!["clean".into(), "cue-conflict".into()],
            ..BenchmarkConfig::default()
        };
        let suite = build_benchmark(21, &config).unwrap();
        Dataset {
            meta: DatasetMeta {
                version: FORMAT_VERSION,
                classes: 2,
                size: config.size,
                seed: 21,
            },
            conditions: suite,
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("suite.gcds");
        let dataset = sample_dataset();
        save_dataset(&path, &dataset).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded, dataset);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("suite.gcds");
        save_dataset(&path, &sample_dataset()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(DataError::Malformed(_))
        ));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("suite.gcds");
        save_dataset(&path, &sample_dataset()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(DataError::Version { got: 99, .. })
        ));
    }

    #[test]
    fn empty_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.gcds");
        let dataset = Dataset {
            meta: DatasetMeta {
                version: FORMAT_VERSION,
                classes: 0,
                size: 32,
                seed: 0,
            },
            conditions: BTreeMap::new(),
        };
        save_dataset(&path, &dataset).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert!(loaded.conditions.is_empty());
    }
}
