//! Reader for the IDX image/label container (big-endian header, raw
//! unsigned bytes).

use std::path::Path;

use super::Dataset;
use crate::error::{Error, IdxKind, Result};
use crate::io::read_file;
use crate::network::Example;
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, kind: IdxKind) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(Error::Truncated {
            kind,
            expected: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], kind: IdxKind, expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0, kind)?;
    if found != expected {
        return Err(Error::BadMagic {
            kind,
            expected,
            found,
        });
    }
    Ok(())
}

fn payload(bytes: &[u8], start: usize, len: usize, kind: IdxKind) -> Result<&[u8]> {
    let end = start + len;
    if bytes.len() < end {
        return Err(Error::Truncated {
            kind,
            expected: end,
            found: bytes.len(),
        });
    }
    Ok(&bytes[start..end])
}

/// Parses in-memory IDX image and label files. Pixels are divided by 255.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    check_magic(images, IdxKind::Images, IMAGES_MAGIC)?;
    check_magic(labels, IdxKind::Labels, LABELS_MAGIC)?;

    let n_images = be_u32(images, 4, IdxKind::Images)? as usize;
    let rows = be_u32(images, 8, IdxKind::Images)? as usize;
    let cols = be_u32(images, 12, IdxKind::Images)? as usize;
    let n_labels = be_u32(labels, 4, IdxKind::Labels)? as usize;
    if n_images != n_labels {
        return Err(Error::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let pixels_per_image = rows * cols;
    if pixels_per_image == 0 {
        return Err(Error::InvalidArgument("IDX images have zero pixels".into()));
    }
    let pixels = payload(images, 16, n_images * pixels_per_image, IdxKind::Images)?;
    let label_bytes = payload(labels, 8, n_labels, IdxKind::Labels)?;

    let num_classes = label_bytes
        .iter()
        .copied()
        .max()
        .map_or(2, |m| (m as usize + 1).max(2));
    let examples = pixels
        .chunks_exact(pixels_per_image)
        .zip(label_bytes)
        .map(|(img, &y)| {
            let x = img.iter().map(|&p| p as f64 / 255.0).collect();
            Example::new(Tensor::vector(x)?, y as usize)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        examples,
        num_classes,
        name: "idx".into(),
        seed: 0,
    })
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    parse_idx(&read_file(images_path)?, &read_file(labels_path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images_2x2() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        b.extend_from_slice(&[0, 255, 51, 102]);
        b.extend_from_slice(&[255, 255, 0, 153]);
        b
    }

    fn labels_2() -> Vec<u8> {
        vec![0, 0, 8, 1, 0, 0, 0, 2, 7, 3]
    }

    #[test]
    fn hand_built_pair() {
        let ds = parse_idx(&images_2x2(), &labels_2()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.num_classes, 8);
        assert_eq!(ds.examples[0].x.data(), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.examples[0].y, 7);
        assert_eq!(ds.examples[1].x.data(), &[1.0, 1.0, 0.0, 0.6]);
        assert_eq!(ds.examples[1].y, 3);
    }

    #[test]
    fn wrong_label_magic() {
        let mut labels = labels_2();
        labels[3] = 3;
        let err = parse_idx(&images_2x2(), &labels).unwrap_err();
        assert!(matches!(
            err,
            Error::BadMagic {
                kind: IdxKind::Labels,
                ..
            }
        ));
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn wrong_image_magic() {
        let mut images = images_2x2();
        images[2] = 9;
        assert!(matches!(
            parse_idx(&images, &labels_2()),
            Err(Error::BadMagic {
                kind: IdxKind::Images,
                ..
            })
        ));
    }

    #[test]
    fn truncated_payloads() {
        let images = images_2x2();
        assert!(matches!(
            parse_idx(&images[..images.len() - 1], &labels_2()),
            Err(Error::Truncated {
                kind: IdxKind::Images,
                ..
            })
        ));
        assert!(matches!(
            parse_idx(&images[..10], &labels_2()),
            Err(Error::Truncated {
                kind: IdxKind::Images,
                ..
            })
        ));
        let labels = labels_2();
        assert!(matches!(
            parse_idx(&images, &labels[..9]),
            Err(Error::Truncated {
                kind: IdxKind::Labels,
                ..
            })
        ));
    }

    #[test]
    fn count_mismatch() {
        let labels = vec![0, 0, 8, 1, 0, 0, 0, 3, 1, 2, 3];
        assert!(matches!(
            parse_idx(&images_2x2(), &labels),
            Err(Error::CountMismatch {
                images: 2,
                labels: 3
            })
        ));
    }

    #[test]
    fn loads_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i.idx"), dir.path().join("l.idx"));
        std::fs::write(&ip, images_2x2()).unwrap();
        std::fs::write(&lp, labels_2()).unwrap();
        assert_eq!(load_idx(&ip, &lp).unwrap().len(), 2);
        assert!(load_idx(&dir.path().join("missing"), &lp)
            .unwrap_err()
            .is_io());
    }
}
