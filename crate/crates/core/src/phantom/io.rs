//! On-disk formats: the AVOL volume container and the annotation/lesion CSVs.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{Label, PhantomError, TargetAnnotation, TrueLesion, Volume3D};
use crate::util::{read_f32, read_u32};

const MAGIC: &[u8; 4] = b"AVOL";
const VERSION: u32 = 1;

/// Writes `magic "AVOL", u32 version, u32 nx ny nz, f32 spacing x3,
/// nx*ny*nz f32 intensities`, all little-endian, x-fastest.
pub fn write_volume(path: &Path, vol: &Volume3D) -> Result<(), PhantomError> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for d in vol.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for s in vol.spacing_mm() {
        w.write_all(&s.to_le_bytes())?;
    }
    for v in vol.intensities() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<Volume3D, PhantomError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 4 || &buf[0..4] != MAGIC {
        return Err(PhantomError::Format("missing AVOL magic".into()));
    }
    let mut pos = 4usize;
    let bad = || PhantomError::Format("truncated volume file".into());
    let version = read_u32(&buf, &mut pos).ok_or_else(bad)?;
    if version != VERSION {
        return Err(PhantomError::Format(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = read_u32(&buf, &mut pos).ok_or_else(bad)? as usize;
    }
    let mut spacing = [0f32; 3];
    for s in spacing.iter_mut() {
        *s = read_f32(&buf, &mut pos).ok_or_else(bad)?;
    }
    let n = dims[0] * dims[1] * dims[2];
    if buf.len() != pos + 4 * n {
        return Err(PhantomError::Format(format!(
            "expected {} intensity bytes, found {}",
            4 * n,
            buf.len() - pos
        )));
    }
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(read_f32(&buf, &mut pos).unwrap());
    }
    Volume3D::from_parts(dims, spacing, data)
}

pub const ANNOTATION_CSV_HEADER: &str = "series_id,x,y,z,label,cad_suggested,size_mm,annotator_id";

pub fn write_annotations_csv(path: &Path, annotations: &[TargetAnnotation]) -> Result<(), PhantomError> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    writeln!(w, "{ANNOTATION_CSV_HEADER}")?;
    for a in annotations {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            a.series_id,
            a.position[0],
            a.position[1],
            a.position[2],
            a.label.as_str(),
            a.cad_suggested,
            a.recorded_size_mm,
            a.annotator_id
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_annotations_csv(path: &Path) -> Result<Vec<TargetAnnotation>, PhantomError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == ANNOTATION_CSV_HEADER => {}
        other => return Err(PhantomError::Format(format!("bad annotation header: {other:?}"))),
    }
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let fail = |m: &str| PhantomError::Format(format!("annotation line {}: {m}", ln + 2));
        if fields.len() != 8 {
            return Err(fail("wrong field count"));
        }
        let label = Label::parse(fields[4]).ok_or_else(|| fail("bad label"))?;
        out.push(TargetAnnotation {
            series_id: fields[0].parse().map_err(|_| fail("bad series_id"))?,
            position: [
                fields[1].parse().map_err(|_| fail("bad x"))?,
                fields[2].parse().map_err(|_| fail("bad y"))?,
                fields[3].parse().map_err(|_| fail("bad z"))?,
            ],
            label,
            cad_suggested: fields[5].parse().map_err(|_| fail("bad cad_suggested"))?,
            recorded_size_mm: fields[6].parse().map_err(|_| fail("bad size_mm"))?,
            annotator_id: fields[7].parse().map_err(|_| fail("bad annotator_id"))?,
        });
    }
    Ok(out)
}

/// Ground-truth lesion list (pipeline-internal, one row per lesion).
pub fn write_lesions_csv(path: &Path, lesions: &[(u64, TrueLesion)]) -> Result<(), PhantomError> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    writeln!(w, "series_id,x,y,z,size_mm,contrast")?;
    for (sid, l) in lesions {
        writeln!(w, "{},{},{},{},{},{}", sid, l.center[0], l.center[1], l.center[2], l.size_mm, l.contrast)?;
    }
    w.flush()?;
    Ok(())
}
