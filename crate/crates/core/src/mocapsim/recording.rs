//! `.hdrc` recording files.
//!
//! Little-endian throughout:
//!
//! ```text
//! "HDRC" u16 version
//! u32 header_len, header:
//!     f64 sample_rate_hz, u64 frame_count, u16 body_count,
//!     per body: u16 id, u16 name_len, name (utf-8), u16 marker_count, 3×f64 per marker
//! per frame: u32 frame_len, frame:
//!     u64 frame_id, u64 timestamp_ns, u32 point_count, 3×f64 per point,
//!     u16 truth_count, per truth: u16 body_id, 3×f64 translation, 4×f64 quaternion (w,x,y,z)
//! ```

use std::fs::File;
use std::io::{self, BufWriter, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::{MocapError, RecordedFrame, Recording, RecordingHeader};
use crate::tracking::{Constellation, MarkerCloud, Pose};

pub const RECORDING_MAGIC: &[u8; 4] = b"HDRC";
pub const RECORDING_VERSION: u16 = 1;

pub fn write_recording(recording: &Recording, path: &Path) -> Result<(), MocapError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_recording_to(recording, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_recording_to<W: Write>(recording: &Recording, out: &mut W) -> Result<(), MocapError> {
    out.write_all(RECORDING_MAGIC)?;
    out.write_u16::<LE>(RECORDING_VERSION)?;

    let mut header = Vec::new();
    header.write_f64::<LE>(recording.header.sample_rate_hz)?;
    header.write_u64::<LE>(recording.frames.len() as u64)?;
    header.write_u16::<LE>(count_u16(recording.header.constellations.len(), "bodies")?)?;
    for c in &recording.header.constellations {
        header.write_u16::<LE>(c.body_id())?;
        let name = c.name().as_bytes();
        header.write_u16::<LE>(count_u16(name.len(), "name bytes")?)?;
        header.write_all(name)?;
        header.write_u16::<LE>(count_u16(c.len(), "markers")?)?;
        for p in c.local_points() {
            write_vec3(&mut header, p)?;
        }
    }
    out.write_u32::<LE>(header.len() as u32)?;
    out.write_all(&header)?;

    let mut buf = Vec::new();
    for f in &recording.frames {
        buf.clear();
        buf.write_u64::<LE>(f.cloud.frame_id)?;
        buf.write_u64::<LE>(f.cloud.timestamp_ns)?;
        buf.write_u32::<LE>(f.cloud.points.len() as u32)?;
        for p in &f.cloud.points {
            write_vec3(&mut buf, p)?;
        }
        buf.write_u16::<LE>(count_u16(f.truth.len(), "truth poses")?)?;
        for (id, pose) in &f.truth {
            buf.write_u16::<LE>(*id)?;
            write_vec3(&mut buf, &pose.translation)?;
            for c in pose.wxyz() {
                buf.write_f64::<LE>(c)?;
            }
        }
        out.write_u32::<LE>(buf.len() as u32)?;
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_recording(path: &Path) -> Result<Recording, MocapError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    parse(&bytes)
}

fn parse(bytes: &[u8]) -> Result<Recording, MocapError> {
    if bytes.len() < 4 {
        return Err(if RECORDING_MAGIC.starts_with(bytes) {
            MocapError::TruncatedFile
        } else {
            MocapError::BadMagic
        });
    }
    if &bytes[..4] != RECORDING_MAGIC {
        return Err(MocapError::BadMagic);
    }
    let mut cur = Cursor::new(&bytes[4..]);
    let version = cur.read_u16::<LE>().map_err(eof)?;
    if version != RECORDING_VERSION {
        return Err(MocapError::UnsupportedVersion(version));
    }

    let header = read_block(&mut cur)?;
    let mut h = Cursor::new(header);
    let sample_rate_hz = h.read_f64::<LE>().map_err(eof)?;
    let frame_count = h.read_u64::<LE>().map_err(eof)?;
    let body_count = h.read_u16::<LE>().map_err(eof)?;
    let mut constellations = Vec::with_capacity(body_count as usize);
    for _ in 0..body_count {
        let id = h.read_u16::<LE>().map_err(eof)?;
        let name_len = h.read_u16::<LE>().map_err(eof)? as usize;
        let mut name = vec![0; name_len];
        h.read_exact(&mut name).map_err(eof)?;
        let name = String::from_utf8(name).map_err(|_| MocapError::Malformed("body name is not utf-8".into()))?;
        let markers = h.read_u16::<LE>().map_err(eof)? as usize;
        if markers < 3 {
            return Err(MocapError::Malformed(format!("body {id} has {markers} markers")));
        }
        let pts = (0..markers).map(|_| read_vec3(&mut h)).collect::<Result<Vec<_>, _>>()?;
        constellations.push(Constellation::build(id, name, pts));
    }
    expect_consumed(&h, "header")?;

    let mut frames = Vec::with_capacity(frame_count.min(1 << 20) as usize);
    for _ in 0..frame_count {
        let block = read_block(&mut cur)?;
        let mut f = Cursor::new(block);
        let frame_id = f.read_u64::<LE>().map_err(eof)?;
        let timestamp_ns = f.read_u64::<LE>().map_err(eof)?;
        let n = f.read_u32::<LE>().map_err(eof)? as usize;
        if n.saturating_mul(24) > block.len() {
            return Err(MocapError::Malformed(format!("frame {frame_id} claims {n} points")));
        }
        let points = (0..n).map(|_| read_vec3(&mut f)).collect::<Result<Vec<_>, _>>()?;
        let truth_count = f.read_u16::<LE>().map_err(eof)?;
        let mut truth = Vec::with_capacity(truth_count as usize);
        for _ in 0..truth_count {
            let id = f.read_u16::<LE>().map_err(eof)?;
            let translation = read_vec3(&mut f)?;
            let mut q = [0.0; 4];
            for c in &mut q {
                *c = f.read_f64::<LE>().map_err(eof)?;
            }
            let rotation = UnitQuaternion::new_unchecked(Quaternion::new(q[0], q[1], q[2], q[3]));
            truth.push((id, Pose::new(translation, rotation)));
        }
        expect_consumed(&f, "frame")?;
        frames.push(RecordedFrame {
            cloud: MarkerCloud::new(frame_id, timestamp_ns, points),
            truth,
        });
    }
    if (cur.position() as usize) < cur.get_ref().len() {
        return Err(MocapError::Malformed("bytes after the last frame".into()));
    }
    Ok(Recording {
        header: RecordingHeader {
            version,
            sample_rate_hz,
            constellations,
        },
        frames,
    })
}

fn read_block<'a>(cur: &mut Cursor<&'a [u8]>) -> Result<&'a [u8], MocapError> {
    let len = cur.read_u32::<LE>().map_err(eof)? as usize;
    let start = cur.position() as usize;
    let data: &'a [u8] = cur.get_ref();
    let block = data.get(start..start + len).ok_or(MocapError::TruncatedFile)?;
    cur.set_position((start + len) as u64);
    Ok(block)
}

fn expect_consumed(cur: &Cursor<&[u8]>, what: &str) -> Result<(), MocapError> {
    if (cur.position() as usize) == cur.get_ref().len() {
        Ok(())
    } else {
        Err(MocapError::Malformed(format!("{what} block has trailing bytes")))
    }
}

fn eof(e: io::Error) -> MocapError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        MocapError::TruncatedFile
    } else {
        MocapError::Io(e)
    }
}

fn count_u16(n: usize, what: &str) -> Result<u16, MocapError> {
    u16::try_from(n).map_err(|_| MocapError::Malformed(format!("too many {what}: {n}")))
}

fn write_vec3<W: Write>(out: &mut W, v: &Vector3<f64>) -> io::Result<()> {
    out.write_f64::<LE>(v.x)?;
    out.write_f64::<LE>(v.y)?;
    out.write_f64::<LE>(v.z)
}

fn read_vec3(cur: &mut Cursor<&[u8]>) -> Result<Vector3<f64>, MocapError> {
    Ok(Vector3::new(
        cur.read_f64::<LE>().map_err(eof)?,
        cur.read_f64::<LE>().map_err(eof)?,
        cur.read_f64::<LE>().map_err(eof)?,
    ))
}
