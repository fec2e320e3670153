//! Dataset directory: `manifest.json` plus `grids/NNNNN.vxg` per sample. A
//! grid file holds two records, the full shape then the view, each a 16-byte
//! header (`"VXG1"`, u32 resolution, u32 flags, u32 payload bytes) followed
//! by occupancy bit-packed least-significant bit first in `(x, y, z)`
//! row-major order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::binary::{put_u32, read_file, write_file, Reader};
use crate::error::{Error, Result};
use crate::voxeldata::{Dataset, LabelTuple, Sample, Split, Vocab, VoxelGrid};

pub const GRID_MAGIC: &[u8; 4] = b"VXG1";
/// Flag bit: the record is the rendered view (otherwise the full shape).
pub const FLAG_VIEW: u32 = 1;
/// Flag bit: the view carries flip noise.
pub const FLAG_NOISY: u32 = 2;

pub fn grid_to_bytes(grid: &VoxelGrid, flags: u32, out: &mut Vec<u8>) -> Result<()> {
    let cells = grid.cells();
    let mut packed = vec![0u8; cells.len().div_ceil(8)];
    for (k, &c) in cells.iter().enumerate() {
        packed[k / 8] |= c << (k % 8);
    }
    out.extend_from_slice(GRID_MAGIC);
    put_u32(out, grid.resolution())?;
    out.extend_from_slice(&flags.to_le_bytes());
    put_u32(out, packed.len())?;
    out.extend_from_slice(&packed);
    Ok(())
}

pub(crate) fn read_grid(r: &mut Reader<'_>) -> Result<(VoxelGrid, u32)> {
    r.expect_magic(GRID_MAGIC)?;
    let resolution = r.u32()? as usize;
    let flags = r.u32()?;
    let at = r.offset();
    let n = r.u32()? as usize;
    let cells = resolution.checked_pow(3).filter(|&c| c.div_ceil(8) == n);
    let Some(cells) = cells else {
        return Err(Error::Format { offset: at, detail: format!("{n} payload bytes for resolution {resolution}") });
    };
    let packed = r.take(n)?;
    let data = (0..cells).map(|k| (packed[k / 8] >> (k % 8)) & 1).collect();
    Ok((VoxelGrid::from_cells(resolution, data)?, flags))
}

pub fn grid_from_bytes(bytes: &[u8]) -> Result<(VoxelGrid, u32)> {
    let mut r = Reader::new(bytes);
    let out = read_grid(&mut r)?;
    r.finish()?;
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct Record {
    file: String,
    label: LabelTuple,
    noisy: bool,
    split: Split,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    resolution: usize,
    max_shift: i32,
    vocab: Vocab,
    samples: Vec<Record>,
}

const FORMAT: &str = "voxsem-dataset";

pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    let grids = dir.join("grids");
    std::fs::create_dir_all(&grids).map_err(|e| Error::file(&grids, e))?;
    let mut records = Vec::with_capacity(dataset.samples.len());
    for (k, s) in dataset.samples.iter().enumerate() {
        let file = format!("grids/{k:05}.vxg");
        let mut bytes = Vec::new();
        grid_to_bytes(&s.full, 0, &mut bytes)?;
        grid_to_bytes(&s.view, FLAG_VIEW | if s.noisy { FLAG_NOISY } else { 0 }, &mut bytes)?;
        write_file(&dir.join(&file), &bytes)?;
        records.push(Record { file, label: s.label, noisy: s.noisy, split: s.split });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: 1,
        resolution: dataset.resolution,
        max_shift: dataset.max_shift,
        vocab: dataset.vocab,
        samples: records,
    };
    write_file(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join("manifest.json");
    let manifest: Manifest = serde_json::from_slice(&read_file(&path)?)?;
    if manifest.format != FORMAT || manifest.version != 1 {
        return Err(Error::Config(format!(
            "{}: unsupported dataset format {} v{}",
            path.display(),
            manifest.format,
            manifest.version
        )));
    }
    let samples = manifest
        .samples
        .iter()
        .map(|rec| {
            manifest.vocab.check(&rec.label)?;
            let bytes = read_file(&dir.join(&rec.file))?;
            let mut r = Reader::new(&bytes);
            let (full, _) = read_grid(&mut r)?;
            let (view, flags) = read_grid(&mut r)?;
            r.finish()?;
            if full.resolution() != manifest.resolution || view.resolution() != manifest.resolution {
                return Err(Error::shape(rec.file.clone(), "grid resolution differs from the manifest"));
            }
            if flags & FLAG_VIEW == 0 || (flags & FLAG_NOISY != 0) != rec.noisy {
                return Err(Error::Config(format!("{}: record flags disagree with the manifest", rec.file)));
            }
            Ok(Sample { label: rec.label, full, view, noisy: rec.noisy, split: rec.split })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset { resolution: manifest.resolution, vocab: manifest.vocab, max_shift: manifest.max_shift, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxeldata::{build_dataset, DataConfig};

    #[test]
    fn grid_bytes_roundtrip_and_header() {
        let mut g = VoxelGrid::empty(5).unwrap();
        g.set(0, 0, 0, true);
        g.set(4, 4, 4, true);
        g.set(2, 1, 3, true);
        let mut bytes = Vec::new();
        grid_to_bytes(&g, 3, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"VXG1");
        assert_eq!(bytes.len(), 16 + 125usize.div_ceil(8));
        assert_eq!(bytes[16] & 1, 1);
        assert_eq!(grid_from_bytes(&bytes).unwrap(), (g, 3));
        assert!(grid_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[12] = 99;
        assert!(matches!(grid_from_bytes(&bad), Err(Error::Format { offset: 12, .. })));
    }

    #[test]
    fn dataset_roundtrip() {
        let cfg = DataConfig { classes: 2, instances: 2, test_instances: 1, ..DataConfig::default() };
        let ds = build_dataset(&cfg, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &ds).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
        assert!(load_dataset(&dir.path().join("nope")).unwrap_err().to_string().contains("nope"));
    }
}
