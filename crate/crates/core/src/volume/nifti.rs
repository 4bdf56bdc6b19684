//! Single-file NIfTI-1 (`.nii`, `.nii.gz`) reader and writer.
//!
//! Reads uint8/int16/int32/float32/float64 3D volumes in either byte order
//! and writes little-endian float32 with the sform set from the affine.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{diagonal_affine, Affine, GridGeometry, ScalarVolume};
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

const NIFTI_UNITS_MM: u8 = 2;
const NIFTI_XFORM_ALIGNED_ANAT: i16 = 2;

/// Loads a `.nii` or `.nii.gz` file. Compression is detected from content.
pub fn load_nifti(path: impl AsRef<Path>) -> Result<ScalarVolume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_nifti(&bytes)
}

/// Writes `vol` as float32 NIfTI-1, gzip-compressed when the path ends in `.gz`.
pub fn save_nifti(vol: &ScalarVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw = write_nifti(vol);
    let bytes = if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(Vec::with_capacity(raw.len() / 2), Compression::default());
        enc.write_all(&raw).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        raw
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses a NIfTI-1 image from memory (plain or gzip-compressed).
pub fn read_nifti(bytes: &[u8]) -> Result<ScalarVolume> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut raw = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut raw)
            .map_err(|e| Error::Format(format!("gzip stream: {e}")))?;
        return read_raw(&raw);
    }
    read_raw(bytes)
}

fn read_raw(bytes: &[u8]) -> Result<ScalarVolume> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {HEADER_SIZE}-byte header",
            bytes.len()
        )));
    }
    if LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        parse::<LittleEndian>(bytes)
    } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        parse::<BigEndian>(bytes)
    } else {
        Err(Error::Format("sizeof_hdr is not 348".into()))
    }
}

fn parse<E: ByteOrder>(b: &[u8]) -> Result<ScalarVolume> {
    match &b[344..348] {
        b"n+1\0" => {}
        b"ni1\0" => return Err(Error::Format("two-file (.hdr/.img) NIfTI is not supported".into())),
        m => return Err(Error::Format(format!("bad magic {m:?}"))),
    }

    let i16_at = |off: usize| E::read_i16(&b[off..off + 2]);
    let f32_at = |off: usize| E::read_f32(&b[off..off + 4]);

    let mut dim = [0i16; 8];
    for (n, d) in dim.iter_mut().enumerate() {
        *d = i16_at(40 + 2 * n);
    }
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(Error::Format(format!("dim[0] = {ndim} outside 1..=7")));
    }
    let mut dims = [1usize; 3];
    for a in 0..3 {
        if (a as i16) < ndim {
            let d = dim[a + 1];
            if d < 1 {
                return Err(Error::Format(format!("dim[{}] = {d}", a + 1)));
            }
            dims[a] = d as usize;
        }
    }
    for n in 4..=ndim as usize {
        if dim[n] > 1 {
            return Err(Error::UnsupportedShape(format!(
                "dim[{n}] = {} (only 3D volumes are supported)",
                dim[n]
            )));
        }
    }

    let datatype = i16_at(70);
    let bytes_per_voxel = match datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_INT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => {
            return Err(Error::Format(format!("unsupported datatype code {other}")));
        }
    };

    let mut pixdim = [0f32; 8];
    for (n, p) in pixdim.iter_mut().enumerate() {
        *p = f32_at(76 + 4 * n);
    }
    let mut spacing = [1f64; 3];
    for a in 0..3 {
        let p = pixdim[a + 1].abs() as f64;
        if (a as i16) < ndim {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::Format(format!("pixdim[{}] = {}", a + 1, pixdim[a + 1])));
            }
            spacing[a] = p;
        } else if p > 0.0 && p.is_finite() {
            spacing[a] = p;
        }
    }

    let vox_offset = f32_at(108);
    if !(vox_offset >= HEADER_SIZE as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::Format(format!("vox_offset = {vox_offset}")));
    }
    let vox_offset = vox_offset as usize;
    let slope = f32_at(112) as f64;
    let inter = f32_at(116) as f64;
    let (slope, inter) = if slope != 0.0 && slope.is_finite() {
        (slope, if inter.is_finite() { inter } else { 0.0 })
    } else {
        (1.0, 0.0)
    };

    let affine = header_affine::<E>(b, &pixdim, spacing)?;
    let geometry = GridGeometry::new(dims, spacing, affine)?;

    let n = geometry.len();
    let need = n * bytes_per_voxel;
    let payload = b.get(vox_offset..vox_offset + need).ok_or_else(|| {
        Error::Format(format!(
            "voxel data truncated: need {need} bytes at offset {vox_offset}, file has {}",
            b.len()
        ))
    })?;

    let raw: Vec<f64> = match datatype {
        DT_UINT8 => payload.iter().map(|&v| v as f64).collect(),
        DT_INT16 => payload.chunks_exact(2).map(|c| E::read_i16(c) as f64).collect(),
        DT_INT32 => payload.chunks_exact(4).map(|c| E::read_i32(c) as f64).collect(),
        DT_FLOAT32 => payload.chunks_exact(4).map(|c| E::read_f32(c) as f64).collect(),
        DT_FLOAT64 => payload.chunks_exact(8).map(|c| E::read_f64(c)).collect(),
        _ => unreachable!(),
    };
    let data = raw
        .into_iter()
        .map(|v| {
            if slope == 1.0 && inter == 0.0 {
                v as f32
            } else {
                (slope * v + inter) as f32
            }
        })
        .collect();
    ScalarVolume::new(geometry, data)
}

/// sform if `sform_code > 0`, else qform if `qform_code > 0`, else a
/// diagonal affine from pixdim.
fn header_affine<E: ByteOrder>(b: &[u8], pixdim: &[f32; 8], spacing: [f64; 3]) -> Result<Affine> {
    let i16_at = |off: usize| E::read_i16(&b[off..off + 2]);
    let f64_at = |off: usize| E::read_f32(&b[off..off + 4]) as f64;
    let qform_code = i16_at(252);
    let sform_code = i16_at(254);

    let affine = if sform_code > 0 {
        let mut m = diagonal_affine([1.0; 3]);
        for (r, row) in m.iter_mut().take(3).enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f64_at(280 + 16 * r + 4 * c);
            }
        }
        m
    } else if qform_code > 0 {
        let (qb, qc, qd) = (f64_at(256), f64_at(260), f64_at(264));
        let qa = (1.0 - (qb * qb + qc * qc + qd * qd)).max(0.0).sqrt();
        let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let rot = [
            [
                qa * qa + qb * qb - qc * qc - qd * qd,
                2.0 * (qb * qc - qa * qd),
                2.0 * (qb * qd + qa * qc),
            ],
            [
                2.0 * (qb * qc + qa * qd),
                qa * qa + qc * qc - qb * qb - qd * qd,
                2.0 * (qc * qd - qa * qb),
            ],
            [
                2.0 * (qb * qd - qa * qc),
                2.0 * (qc * qd + qa * qb),
                qa * qa + qd * qd - qb * qb - qc * qc,
            ],
        ];
        let scale = [spacing[0], spacing[1], qfac * spacing[2]];
        let offset = [f64_at(268), f64_at(272), f64_at(276)];
        let mut m = diagonal_affine([1.0; 3]);
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] = rot[r][c] * scale[c];
            }
            m[r][3] = offset[r];
        }
        m
    } else {
        diagonal_affine(spacing)
    };
    if affine.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite affine in header".into()));
    }
    Ok(affine)
}

/// Serializes `vol` as an uncompressed little-endian float32 NIfTI-1 image.
pub fn write_nifti(vol: &ScalarVolume) -> Vec<u8> {
    let geo = vol.geometry();
    let mut out = vec![0u8; VOX_OFFSET + 4 * vol.len()];
    {
        let h = &mut out[..VOX_OFFSET];
        LittleEndian::write_i32(&mut h[0..4], HEADER_SIZE as i32);
        let dim: [i16; 8] = [
            3,
            geo.dims[0] as i16,
            geo.dims[1] as i16,
            geo.dims[2] as i16,
            1,
            1,
            1,
            1,
        ];
        for (n, d) in dim.iter().enumerate() {
            LittleEndian::write_i16(&mut h[40 + 2 * n..42 + 2 * n], *d);
        }
        LittleEndian::write_i16(&mut h[70..72], DT_FLOAT32);
        LittleEndian::write_i16(&mut h[72..74], 32);
        let pixdim = [
            1.0f32,
            geo.spacing[0] as f32,
            geo.spacing[1] as f32,
            geo.spacing[2] as f32,
            1.0,
            1.0,
            1.0,
            1.0,
        ];
        for (n, p) in pixdim.iter().enumerate() {
            LittleEndian::write_f32(&mut h[76 + 4 * n..80 + 4 * n], *p);
        }
        LittleEndian::write_f32(&mut h[108..112], VOX_OFFSET as f32);
        LittleEndian::write_f32(&mut h[112..116], 1.0);
        LittleEndian::write_f32(&mut h[116..120], 0.0);
        h[123] = NIFTI_UNITS_MM;
        let descrip = b"perfmap";
        h[148..148 + descrip.len()].copy_from_slice(descrip);
        LittleEndian::write_i16(&mut h[254..256], NIFTI_XFORM_ALIGNED_ANAT);
        for r in 0..3 {
            for c in 0..4 {
                let off = 280 + 16 * r + 4 * c;
                LittleEndian::write_f32(&mut h[off..off + 4], geo.affine[r][c] as f32);
            }
        }
        h[344..348].copy_from_slice(b"n+1\0");
    }
    for (chunk, &v) in out[VOX_OFFSET..].chunks_exact_mut(4).zip(vol.data()) {
        LittleEndian::write_f32(chunk, v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-assembled header for the reader tests, independent of `write_nifti`.
    fn header(dims: [i16; 8], datatype: i16, bitpix: i16, pixdim: [f32; 4]) -> Vec<u8> {
        let mut h = vec![0u8; VOX_OFFSET];
        LittleEndian::write_i32(&mut h[0..4], 348);
        for (n, d) in dims.iter().enumerate() {
            LittleEndian::write_i16(&mut h[40 + 2 * n..42 + 2 * n], *d);
        }
        LittleEndian::write_i16(&mut h[70..72], datatype);
        LittleEndian::write_i16(&mut h[72..74], bitpix);
        for (n, p) in pixdim.iter().enumerate() {
            LittleEndian::write_f32(&mut h[76 + 4 * n..80 + 4 * n], *p);
        }
        LittleEndian::write_f32(&mut h[108..112], 352.0);
        h[344..348].copy_from_slice(b"n+1\0");
        h
    }

    #[test]
    fn minimal_float32() {
        let mut bytes = header([3, 2, 2, 2, 1, 1, 1, 1], DT_FLOAT32, 32, [1.0; 4]);
        for v in 0..8 {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let vol = read_nifti(&bytes).unwrap();
        assert_eq!(vol.dims(), [2, 2, 2]);
        assert_eq!(vol.data(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(vol.geometry().affine, diagonal_affine([1.0; 3]));

        let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(&bytes).unwrap();
        let gz = enc.finish().unwrap();
        assert_eq!(read_nifti(&gz).unwrap(), vol);
    }

    #[test]
    fn int16_scaling() {
        let mut bytes = header([3, 1, 1, 1, 1, 1, 1, 1], DT_INT16, 16, [1.0; 4]);
        LittleEndian::write_f32(&mut bytes[112..116], 0.5);
        LittleEndian::write_f32(&mut bytes[116..120], 10.0);
        bytes.extend_from_slice(&4i16.to_le_bytes());
        let vol = read_nifti(&bytes).unwrap();
        // 0.5 * 4 + 10
        assert_eq!(vol.data(), &[12.0]);
    }

    #[test]
    fn other_datatypes_and_big_endian() {
        let mut bytes = header([3, 2, 1, 1, 1, 1, 1, 1], DT_UINT8, 8, [1.0; 4]);
        bytes.extend_from_slice(&[7, 255]);
        assert_eq!(read_nifti(&bytes).unwrap().data(), &[7.0, 255.0]);

        let mut bytes = header([3, 2, 1, 1, 1, 1, 1, 1], DT_FLOAT64, 64, [1.0; 4]);
        bytes.extend_from_slice(&(-1.5f64).to_le_bytes());
        bytes.extend_from_slice(&(2.25f64).to_le_bytes());
        assert_eq!(read_nifti(&bytes).unwrap().data(), &[-1.5, 2.25]);

        let mut bytes = header([3, 1, 1, 1, 1, 1, 1, 1], DT_INT32, 32, [1.0; 4]);
        bytes.extend_from_slice(&(-70000i32).to_le_bytes());
        assert_eq!(read_nifti(&bytes).unwrap().data(), &[-70000.0]);

        // Big-endian: rewrite every multi-byte field we set.
        let mut be = vec![0u8; VOX_OFFSET];
        BigEndian::write_i32(&mut be[0..4], 348);
        for (n, d) in [3i16, 2, 1, 1, 1, 1, 1, 1].iter().enumerate() {
            BigEndian::write_i16(&mut be[40 + 2 * n..42 + 2 * n], *d);
        }
        BigEndian::write_i16(&mut be[70..72], DT_INT16);
        for n in 0..4 {
            BigEndian::write_f32(&mut be[76 + 4 * n..80 + 4 * n], 2.0);
        }
        BigEndian::write_f32(&mut be[108..112], 352.0);
        be[344..348].copy_from_slice(b"n+1\0");
        be.extend_from_slice(&300i16.to_be_bytes());
        be.extend_from_slice(&(-2i16).to_be_bytes());
        let vol = read_nifti(&be).unwrap();
        assert_eq!(vol.data(), &[300.0, -2.0]);
        assert_eq!(vol.geometry().spacing, [2.0; 3]);
    }

    #[test]
    fn trailing_unit_dims_accepted() {
        let mut bytes = header([4, 2, 1, 1, 1, 1, 1, 1], DT_UINT8, 8, [1.0; 4]);
        bytes.extend_from_slice(&[1, 2]);
        assert_eq!(read_nifti(&bytes).unwrap().dims(), [2, 1, 1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut bytes = header([3, 1, 1, 1, 1, 1, 1, 1], DT_FLOAT32, 32, [1.0; 4]);
        bytes.extend_from_slice(&0f32.to_le_bytes());
        let mut bad_magic = bytes.clone();
        bad_magic[344..348].copy_from_slice(b"xyz\0");
        assert!(matches!(read_nifti(&bad_magic), Err(Error::Format(_))));
        assert!(matches!(read_nifti(&bytes[..100]), Err(Error::Format(_))));
        let mut bad_size = bytes.clone();
        bad_size[0] = 0;
        assert!(matches!(read_nifti(&bad_size), Err(Error::Format(_))));

        let mut four_d = header([4, 1, 1, 1, 3, 1, 1, 1], DT_FLOAT32, 32, [1.0; 4]);
        four_d.extend_from_slice(&[0u8; 12]);
        assert!(matches!(read_nifti(&four_d), Err(Error::UnsupportedShape(_))));

        let mut nan = header([3, 3, 1, 1, 1, 1, 1, 1], DT_FLOAT32, 32, [1.0; 4]);
        for v in [f32::NAN, 1.0, f32::NAN] {
            nan.extend_from_slice(&v.to_le_bytes());
        }
        let err = read_nifti(&nan).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("2 voxel"), "{err}");

        let truncated = header([3, 4, 4, 4, 1, 1, 1, 1], DT_FLOAT32, 32, [1.0; 4]);
        assert!(matches!(read_nifti(&truncated), Err(Error::Format(_))));
    }

    #[test]
    fn qform_affine() {
        // Identity rotation with qfac = -1 and an offset.
        let mut bytes = header([3, 1, 1, 1, 1, 1, 1, 1], DT_UINT8, 8, [-1.0, 2.0, 3.0, 4.0]);
        LittleEndian::write_i16(&mut bytes[252..254], 1);
        LittleEndian::write_f32(&mut bytes[268..272], 5.0);
        LittleEndian::write_f32(&mut bytes[272..276], -6.0);
        LittleEndian::write_f32(&mut bytes[276..280], 7.0);
        bytes.push(0);
        let a = read_nifti(&bytes).unwrap().geometry().affine;
        assert_eq!(a[0], [2.0, 0.0, 0.0, 5.0]);
        assert_eq!(a[1], [0.0, 3.0, 0.0, -6.0]);
        assert_eq!(a[2], [0.0, 0.0, -4.0, 7.0]);

        // 90 degrees about z: b = c = 0, d = sin(45deg).
        let mut bytes = header([3, 1, 1, 1, 1, 1, 1, 1], DT_UINT8, 8, [1.0; 4]);
        LittleEndian::write_i16(&mut bytes[252..254], 1);
        LittleEndian::write_f32(&mut bytes[264..268], std::f32::consts::FRAC_1_SQRT_2);
        bytes.push(0);
        let a = read_nifti(&bytes).unwrap().geometry().affine;
        assert!((a[0][1] + 1.0).abs() < 1e-6 && (a[1][0] - 1.0).abs() < 1e-6);
        assert!(a[0][0].abs() < 1e-6 && a[1][1].abs() < 1e-6);
    }

    #[test]
    fn writer_header_fields() {
        let g = GridGeometry::with_spacing([3, 2, 1], [0.5, 0.5, 2.0]).unwrap();
        let vol = ScalarVolume::filled(g, 1.0);
        let bytes = write_nifti(&vol);
        assert_eq!(bytes.len(), 352 + 4 * 6);
        assert_eq!(LittleEndian::read_i16(&bytes[70..72]), DT_FLOAT32);
        assert_eq!(LittleEndian::read_i16(&bytes[254..256]), 2);
        assert_eq!(LittleEndian::read_f32(&bytes[80..84]), 0.5);
        assert_eq!(LittleEndian::read_f32(&bytes[88..92]), 2.0);
        // srow_z[2]
        assert_eq!(LittleEndian::read_f32(&bytes[312 + 8..312 + 12]), 2.0);
    }
}
