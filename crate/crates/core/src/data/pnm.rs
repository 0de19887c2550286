//! Binary netpbm I/O: RGB images as P6, label masks as P5, maxval 255.

use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageDecoder, ImageEncoder, RgbImage};

use crate::error::{Error, Result};

fn decode(bytes: &[u8], want: PnmSubtype) -> Result<(u32, u32, Vec<u8>)> {
    let dec = PnmDecoder::new(Cursor::new(bytes)).map_err(|e| Error::Image(e.to_string()))?;
    if dec.subtype() != want {
        return Err(Error::Image(format!("expected {:?}, found {:?}", want, dec.subtype())));
    }
    let maxval = dec.header().maximal_sample();
    if maxval != 255 {
        return Err(Error::Image(format!("maxval {maxval} unsupported, need 255")));
    }
    let (w, h) = dec.dimensions();
    let mut buf = vec![0u8; dec.total_bytes() as usize];
    dec.read_image(&mut buf).map_err(|e| Error::Image(e.to_string()))?;
    Ok((w, h, buf))
}

fn encode(w: u32, h: u32, data: &[u8], subtype: PnmSubtype, color: ExtendedColorType) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(subtype)
        .write_image(data, w, h, color)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok(out)
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let (w, h, buf) = decode(bytes, PnmSubtype::Pixmap(SampleEncoding::Binary))?;
    RgbImage::from_raw(w, h, buf).ok_or_else(|| Error::Image("payload size".into()))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let (w, h, buf) = decode(bytes, PnmSubtype::Graymap(SampleEncoding::Binary))?;
    GrayImage::from_raw(w, h, buf).ok_or_else(|| Error::Image("payload size".into()))
}

pub fn encode_ppm(img: &RgbImage) -> Result<Vec<u8>> {
    encode(img.width(), img.height(), img.as_raw(), PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8)
}

pub fn encode_pgm(img: &GrayImage) -> Result<Vec<u8>> {
    encode(img.width(), img.height(), img.as_raw(), PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    decode_ppm(&read(path)?).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(&read(path)?).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    crate::io::write_atomic(path, &encode_ppm(img)?)
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    crate::io::write_atomic(path, &encode_pgm(img)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rgb = RgbImage::from_fn(13, 7, |_, _| image::Rgb([rng.gen(), rng.gen(), rng.gen()]));
        assert_eq!(decode_ppm(&encode_ppm(&rgb).unwrap()).unwrap(), rgb);
        let gray = GrayImage::from_fn(5, 9, |_, _| image::Luma([rng.gen()]));
        assert_eq!(decode_pgm(&encode_pgm(&gray).unwrap()).unwrap(), gray);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        write_pgm(&p, &gray).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), gray);
    }

    #[test]
    fn header_contract() {
        let mut bytes = b"P5\n512 512\n255\n".to_vec();
        bytes.extend(std::iter::repeat(7u8).take(512 * 512));
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.dimensions(), (512, 512));
        let commented = b"P5\n# made by hand\n2 1\n# another\n255\n\x03\x04";
        assert_eq!(decode_pgm(commented).unwrap().as_raw(), &vec![3, 4]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(decode_pgm(b"P5\n2 2\n255\n\x01").is_err());
        assert!(decode_pgm(b"P5\n2 1\n100\n\x01\x02").is_err());
        assert!(decode_pgm(b"P6\n1 1\n255\n\x01\x02\x03").is_err());
        assert!(decode_ppm(b"PX\n1 1\n255\n\x01\x02\x03").is_err());
        assert!(decode_pgm(b"").is_err());
    }
}
