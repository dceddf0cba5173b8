//! On-disk prepared datasets: standardized PGM slices plus `manifest.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pgm::{read_pgm, write_pgm16};
use super::slices::{DomainTag, Provenance, SliceImage};
use super::split::SliceDataset;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub file: String,
    pub domain: DomainTag,
    pub split: SplitPart,
    pub source_id: String,
    pub slice_index: usize,
}

fn slice_file(img: &SliceImage, split: SplitPart, k: usize) -> String {
    let part = match split {
        SplitPart::Train => "train",
        SplitPart::Test => "test",
    };
    let id: String = img
        .provenance
        .source_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{}/{part}/{k:04}_{id}_{:03}.pgm", img.domain.as_str(), img.provenance.slice_index)
}

/// Write every slice of `datasets` as 16-bit PGM under `dir` and record them
/// in `dir/manifest.csv`. Returns the manifest rows in file order.
pub fn write_prepared(dir: &Path, datasets: &[&SliceDataset]) -> Result<Vec<ManifestRow>> {
    let mut rows = Vec::new();
    for ds in datasets {
        for (split, part) in [(SplitPart::Train, &ds.train), (SplitPart::Test, &ds.test)] {
            for (k, img) in part.iter().enumerate() {
                let file = slice_file(img, split, k);
                let path = dir.join(&file);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                write_pgm16(&path, &img.to_gray())?;
                rows.push(ManifestRow {
                    file,
                    domain: img.domain,
                    split,
                    source_id: img.provenance.source_id.clone(),
                    slice_index: img.provenance.slice_index,
                });
            }
        }
    }
    write_manifest(&dir.join(MANIFEST_FILE), &rows)?;
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(format!("{}: {e}", path.display()))
    }
}

/// Load the prepared dataset of one domain from `dir` (as written by [`write_prepared`]).
pub fn load_prepared(dir: &Path, domain: DomainTag) -> Result<SliceDataset> {
    let rows = read_manifest(&dir.join(MANIFEST_FILE))?;
    let mut ds = SliceDataset {
        train: Vec::new(),
        test: Vec::new(),
        domain,
        split_seed: 0,
    };
    for row in rows.into_iter().filter(|r| r.domain == domain) {
        let path: PathBuf = dir.join(&row.file);
        let img = SliceImage::from_gray(
            read_pgm(&path)?,
            Provenance {
                source_id: row.source_id,
                slice_index: row.slice_index,
            },
            domain,
        );
        match row.split {
            SplitPart::Train => ds.train.push(img),
            SplitPart::Test => ds.test.push(img),
        }
    }
    if ds.is_empty() {
        return Err(Error::Dataset(format!(
            "{} lists no {domain} slices",
            dir.join(MANIFEST_FILE).display()
        )));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::phantom::make_phantom_dataset;

    #[test]
    fn prepared_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let src = make_phantom_dataset(6, 16, DomainTag::Source3T, 2).unwrap();
        let tgt = make_phantom_dataset(6, 16, DomainTag::Target1p5T, 2).unwrap();
        let rows = write_prepared(dir.path(), &[&src, &tgt]).unwrap();
        assert_eq!(rows.len(), 12);
        let header = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(header.starts_with("file,domain,split,source_id,slice_index\n"));
        let back = load_prepared(dir.path(), DomainTag::Target1p5T).unwrap();
        assert_eq!((back.train.len(), back.test.len()), (4, 2));
        for (a, b) in back.train.iter().zip(&tgt.train) {
            assert_eq!(a.provenance, b.provenance);
            for (p, q) in a.pixels.iter().zip(&b.pixels) {
                assert!((p - q).abs() <= 0.5 / 65535.0 + 1e-12);
            }
        }
        assert!(matches!(load_prepared(dir.path(), DomainTag::Synthetic), Err(Error::Dataset(_))));
    }
}
