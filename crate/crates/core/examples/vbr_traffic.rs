//! Frame sizes and emission times of the XR video source.

use rlcsim::app::{VbrSource, VbrSourceConfig};

fn main() -> anyhow::Result<()> {
    let mut src = VbrSource::new(VbrSourceConfig::xr(25e6, 60.0), 7, 0)?;
    let frames: Vec<_> = (0..600).map(|_| src.next_frame()).collect();
    for f in frames.iter().take(8) {
        println!("frame {:>3}  {:>6} B  at {:>9.3} ms", f.id, f.size, f.emit_at.as_millis_f64());
    }
    let bytes: u64 = frames.iter().map(|f| f.size as u64).sum();
    let span = frames.last().unwrap().emit_at.as_secs_f64();
    println!("{} frames over {span:.2} s: {:.2} Mb/s", frames.len(), bytes as f64 * 8.0 / span / 1e6);
    Ok(())
}
