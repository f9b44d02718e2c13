use crate::container::Frame;
use crate::error::{Error, Result};

/// Bilinear resize with half-pixel centers, edges clamped. Output values are
/// rounded half up.
pub fn resize_bilinear(frame: &Frame, height: usize, width: usize) -> Result<Frame> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidConfig("zero target dimension".into()));
    }
    let mut out = Vec::new();
    resize_plane(&frame.pixels, frame.height, frame.width, height, width, &mut out);
    Ok(Frame {
        width,
        height,
        pts: frame.pts,
        pixels: out,
    })
}

struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(src: usize, dst: usize) -> Vec<Tap> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let pos = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            Tap {
                lo,
                hi: (lo + 1).min(src - 1),
                frac: pos - lo as f64,
            }
        })
        .collect()
}

/// Resizes a planar `(3, src_h, src_w)` buffer into `out`.
pub fn resize_plane(src: &[u8], src_h: usize, src_w: usize, dst_h: usize, dst_w: usize, out: &mut Vec<u8>) {
    out.clear();
    if (src_h, src_w) == (dst_h, dst_w) {
        out.extend_from_slice(src);
        return;
    }
    out.resize(3 * dst_h * dst_w, 0);
    let ys = taps(src_h, dst_h);
    let xs = taps(src_w, dst_w);
    for c in 0..3 {
        let plane = &src[c * src_h * src_w..(c + 1) * src_h * src_w];
        let dst = &mut out[c * dst_h * dst_w..(c + 1) * dst_h * dst_w];
        for (y, ty) in ys.iter().enumerate() {
            let r0 = &plane[ty.lo * src_w..(ty.lo + 1) * src_w];
            let r1 = &plane[ty.hi * src_w..(ty.hi + 1) * src_w];
            for (x, tx) in xs.iter().enumerate() {
                let top = r0[tx.lo] as f64 * (1.0 - tx.frac) + r0[tx.hi] as f64 * tx.frac;
                let bot = r1[tx.lo] as f64 * (1.0 - tx.frac) + r1[tx.hi] as f64 * tx.frac;
                let v = top * (1.0 - ty.frac) + bot * ty.frac;
                dst[y * dst_w + x] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
        }
    }
}
