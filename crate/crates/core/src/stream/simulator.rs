//! Device simulator: replays a recording to a gateway as framed packets at
//! real-time pace (divided by `speed`).

use std::io::{BufWriter, Write};
use std::net::TcpStream;
use std::time::Duration;

use super::{encode_packet, FramedPacket, StreamError};
use crate::signal::SignalRecord;

/// Samples per frame (one second at the 25 Hz deployment rate).
pub const FRAME_SAMPLES: usize = 25;

/// Stream `record` to `target`; sequence numbers run contiguously from 0 and
/// a trailing short frame carries any remainder.
pub fn simulate_device(
    record: &SignalRecord,
    target: &str,
    speed: f64,
    session_id: u64,
) -> Result<(), StreamError> {
    if speed < 1.0 || !speed.is_finite() {
        return Err(StreamError::ShapeMismatch(format!("speed {speed} must be >= 1")));
    }
    let stream = TcpStream::connect(target).map_err(StreamError::ConnectFailure)?;
    stream.set_nodelay(true)?;
    let mut writer = BufWriter::new(stream);
    let mut seq = 0u32;
    for start in (0..record.len()).step_by(FRAME_SAMPLES) {
        let end = (start + FRAME_SAMPLES).min(record.len());
        let samples: Vec<[f32; 4]> = (start..end)
            .map(|i| {
                [
                    record.channels[0][i] as f32,
                    record.channels[1][i] as f32,
                    record.channels[2][i] as f32,
                    record.channels[3][i] as f32,
                ]
            })
            .collect();
        let packet = FramedPacket { session_id, seq, samples };
        writer.write_all(&encode_packet(&packet)?)?;
        writer.flush()?;
        seq += 1;
        let pace = (end - start) as f64 / record.rate_hz / speed;
        if pace > 1e-6 {
            std::thread::sleep(Duration::from_secs_f64(pace));
        }
    }
    Ok(())
}
