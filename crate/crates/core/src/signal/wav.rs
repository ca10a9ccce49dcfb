//! 16-bit mono PCM WAV I/O. Samples map to `[-1, 1)` by dividing by 32768.

use std::io::{Cursor, Read, Seek};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, SignalError};

fn spec(sample_rate: u32) -> WavSpec {
    WavSpec { channels: 1, sample_rate, bits_per_sample: 16, sample_format: SampleFormat::Int }
}

fn to_pcm(sample: f64) -> i16 {
    (sample * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn read<R: Read>(reader: WavReader<R>) -> Result<AudioClip, SignalError> {
    let s = reader.spec();
    if s.channels != 1 || s.bits_per_sample != 16 || s.sample_format != SampleFormat::Int {
        return Err(SignalError::InvalidAudio(format!(
            "expected mono 16-bit PCM, got {} channel(s) at {} bits",
            s.channels, s.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()?;
    AudioClip::new(samples, s.sample_rate)
}

pub fn read_wav(path: &Path) -> Result<AudioClip, SignalError> {
    read(WavReader::open(path)?)
}

pub fn wav_from_bytes(bytes: &[u8]) -> Result<AudioClip, SignalError> {
    read(WavReader::new(Cursor::new(bytes))?)
}

fn write<W: std::io::Write + Seek>(writer: W, clip: &AudioClip) -> Result<(), SignalError> {
    let mut w = WavWriter::new(writer, spec(clip.sample_rate()))?;
    for &s in clip.samples() {
        w.write_sample(to_pcm(s))?;
    }
    w.finalize()?;
    Ok(())
}

pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<(), SignalError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write(file, clip)
}

pub fn wav_to_bytes(clip: &AudioClip) -> Result<Vec<u8>, SignalError> {
    let mut cursor = Cursor::new(Vec::new());
    write(&mut cursor, clip)?;
    Ok(cursor.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_riff_wave_pcm16_mono() {
        let clip = AudioClip::new(vec![0.0, 0.5, -0.5, 1.0, -1.0], 16_000).unwrap();
        let bytes = wav_to_bytes(&clip).unwrap();
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(&bytes[8..12], b"WAVE");
        assert_eq!(u16::from_le_bytes([bytes[22], bytes[23]]), 1); // channels
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 16_000);
        assert_eq!(u16::from_le_bytes([bytes[34], bytes[35]]), 16); // bits
        let data = &bytes[bytes.len() - 10..];
        let pcm: Vec<i16> = data.chunks(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect();
        assert_eq!(pcm, vec![0, 16384, -16384, 32767, -32768]);
    }

    #[test]
    fn pcm_values_round_trip_exactly() {
        let samples: Vec<f64> = (-5..5).map(|i| i as f64 * 1000.0 / 32768.0).collect();
        let clip = AudioClip::new(samples.clone(), 16_000).unwrap();
        let back = wav_from_bytes(&wav_to_bytes(&clip).unwrap()).unwrap();
        assert_eq!(back.samples(), samples.as_slice());
        assert_eq!(back.sample_rate(), 16_000);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let clip = AudioClip::new(vec![0.25; 100], 16_000).unwrap();
        write_wav(&path, &clip).unwrap();
        assert_eq!(read_wav(&path).unwrap(), clip);
    }
}
