//! File formats: metadata CSV, real-valued matrix CSV, the `EMB1` embedding
//! batch, and the `VOL1`/`MSK1` volume and mask containers.
//!
//! All binary formats are little-endian with a 4-byte magic. Floats written
//! as text use 17 significant digits.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::contrastive_loss::ViewPairBatch;
use crate::detection_metrics::{BinaryMask, Dims, ProbVolume};
use crate::error::{Error, Result};
use crate::format_f64;
use crate::metadata_kernel::{AnnotationSource, RawAnnotation};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";
pub const VOLUME_MAGIC: &[u8; 4] = b"VOL1";
pub const MASK_MAGIC: &[u8; 4] = b"MSK1";

#[derive(Debug, Serialize, Deserialize)]
struct MetadataRecord {
    exam_id: String,
    source: String,
    value: i64,
}

/// Reads `exam_id,source,value` rows. Out-of-range values are rejected with
/// the offending exam id and line.
pub fn read_metadata_csv<R: Read>(reader: R) -> Result<Vec<RawAnnotation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["exam_id", "source", "value"] {
        return Err(Error::Parse {
            line: Some(1),
            message: format!("expected header exam_id,source,value, got {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for record in rdr.deserialize::<MetadataRecord>() {
        let record = record?;
        let source: AnnotationSource = record.source.parse()?;
        out.push(RawAnnotation::new(record.exam_id, source, record.value)?);
    }
    Ok(out)
}

pub fn write_metadata_csv<W: Write>(writer: W, rows: &[RawAnnotation]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(["exam_id", "source", "value"])?;
    for r in rows {
        w.write_record([r.exam_id(), r.source().name(), &r.value().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Headerless CSV of reals, one matrix row per line.
pub fn write_matrix_csv<W: Write>(mut writer: W, m: &Array2<f64>) -> Result<()> {
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        writeln!(writer, "{}", line.join(","))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(reader: R) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line());
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(Error::Parse {
                line,
                message: format!("row has {} columns, expected {}", record.len(), cols.unwrap_or(0)),
            });
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("not a number: {field:?}"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), values).map_err(|e| Error::Shape(e.to_string()))
}

pub fn write_embeddings_binary<W: Write>(mut writer: W, batch: &ViewPairBatch) -> Result<()> {
    writer.write_all(EMBEDDING_MAGIC)?;
    writer.write_all(&u32_len(batch.len())?.to_le_bytes())?;
    writer.write_all(&u32_len(batch.dim())?.to_le_bytes())?;
    for view in [batch.x1(), batch.x2()] {
        for v in view.iter() {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn read_embeddings_binary<R: Read>(mut reader: R) -> Result<ViewPairBatch> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut cur = Cursor::new(&bytes);
    cur.magic(EMBEDDING_MAGIC)?;
    let n = cur.u32()? as usize;
    let d = cur.u32()? as usize;
    let mut views = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            data.push(f64::from_le_bytes(cur.take()?));
        }
        views.push(Array2::from_shape_vec((n, d), data).map_err(|e| Error::Shape(e.to_string()))?);
    }
    cur.finish()?;
    let x2 = views.pop().expect("two views");
    let x1 = views.pop().expect("two views");
    ViewPairBatch::new(x1, x2)
}

/// Reads the two views from headerless CSV files with one sample per row.
pub fn read_embeddings_csv<R1: Read, R2: Read>(first: R1, second: R2) -> Result<ViewPairBatch> {
    ViewPairBatch::new(read_matrix_csv(first)?, read_matrix_csv(second)?)
}

pub fn write_volume<W: Write>(mut writer: W, volume: &ProbVolume) -> Result<()> {
    write_dims_header(&mut writer, VOLUME_MAGIC, volume.dims())?;
    for v in volume.voxels() {
        writer.write_all(&v.to_le_bytes())?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_volume<R: Read>(mut reader: R) -> Result<ProbVolume> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut cur = Cursor::new(&bytes);
    cur.magic(VOLUME_MAGIC)?;
    let dims = cur.dims()?;
    let mut voxels = Vec::with_capacity(dims.len());
    for _ in 0..dims.len() {
        voxels.push(f32::from_le_bytes(cur.take()?));
    }
    cur.finish()?;
    ProbVolume::new(dims, voxels)
}

pub fn write_mask<W: Write>(mut writer: W, mask: &BinaryMask) -> Result<()> {
    write_dims_header(&mut writer, MASK_MAGIC, mask.dims())?;
    let bytes: Vec<u8> = mask.voxels().iter().map(|&v| u8::from(v)).collect();
    writer.write_all(&bytes)?;
    writer.flush()?;
    Ok(())
}

pub fn read_mask<R: Read>(mut reader: R) -> Result<BinaryMask> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut cur = Cursor::new(&bytes);
    cur.magic(MASK_MAGIC)?;
    let dims = cur.dims()?;
    let mut voxels = Vec::with_capacity(dims.len());
    for _ in 0..dims.len() {
        let offset = cur.pos;
        voxels.push(match cur.take::<1>()?[0] {
            0 => false,
            1 => true,
            other => {
                return Err(Error::Parse {
                    line: None,
                    message: format!("offset {offset}: mask voxel value {other} is not 0 or 1"),
                })
            }
        });
    }
    cur.finish()?;
    BinaryMask::new(dims, voxels)
}

fn u32_len(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Shape(format!("{n} does not fit in a 32-bit header field")))
}

fn write_dims_header<W: Write>(writer: &mut W, magic: &[u8; 4], dims: Dims) -> Result<()> {
    writer.write_all(magic)?;
    for extent in [dims.x, dims.y, dims.z] {
        writer.write_all(&u32_len(extent)?.to_le_bytes())?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| Error::Parse {
            line: None,
            message: format!("offset {}: unexpected end of data (file has {} bytes)", self.pos, self.bytes.len()),
        })?;
        self.pos = end;
        Ok(chunk.try_into().expect("slice of length N"))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got: [u8; 4] = self.take()?;
        if &got != expected {
            return Err(Error::Parse {
                line: None,
                message: format!(
                    "offset 0: bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&got),
                    String::from_utf8_lossy(expected)
                ),
            });
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn dims(&mut self) -> Result<Dims> {
        let (x, y, z) = (self.u32()?, self.u32()?, self.u32()?);
        Dims::new(x as usize, y as usize, z as usize)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Parse {
                line: None,
                message: format!("offset {}: {} trailing bytes", self.pos, self.bytes.len() - self.pos),
            });
        }
        Ok(())
    }
}
