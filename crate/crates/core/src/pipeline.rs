//! Stage chains joined by bounded queues: a producer thread (frame
//! analysis) feeding the calling thread (file writing or windowed
//! detection). Items keep their production order.

use std::path::Path;
use std::sync::mpsc;

use crate::classify::{frames_per_window, Classifier, DetectionTimeline, LabelMap, Transcoder};
use crate::codec::{TobHeader, TobWriter};
use crate::dsp::{FilterbankSpec, ThirdOctaveFrame, ThirdOctaveSpectrogram};
use crate::error::{invalid, Result};

/// Runs `producer` on its own thread and hands each item to `consume`
/// through a queue holding at most `capacity` items. The first error from
/// either side stops both.
pub fn run_chain<T, I, C>(producer: I, capacity: usize, mut consume: C) -> Result<()>
where
    T: Send,
    I: Iterator<Item = Result<T>> + Send,
    C: FnMut(T) -> Result<()>,
{
    let (tx, rx) = mpsc::sync_channel::<Result<T>>(capacity.max(1));
    std::thread::scope(|s| {
        s.spawn(move || {
            for item in producer {
                let failed = item.is_err();
                if tx.send(item).is_err() || failed {
                    break;
                }
            }
        });
        // returning early drops the receiver, which stops the producer
        for item in rx {
            consume(item?)?;
        }
        Ok(())
    })
}

/// Streams analyzed frames into a `.tob` file. Returns frames and bytes written.
pub fn analyze_to_file<I>(
    frames: I,
    path: impl AsRef<Path>,
    header: TobHeader,
    capacity: usize,
) -> Result<(u64, u64)>
where
    I: Iterator<Item = Result<ThirdOctaveFrame>> + Send,
{
    let mut writer = TobWriter::create(path, header)?;
    run_chain(frames, capacity, |f| writer.append_frame(&f))?;
    let bytes = writer.bytes_written();
    let n = writer.finish()?;
    Ok((n, bytes))
}

/// Windowed detection over a frame stream; produces the same timeline as
/// [`crate::classify::detect_stream`] on the collected frames.
#[allow(clippy::too_many_arguments)]
pub fn detect_frames<I>(
    frames: I,
    spec: &FilterbankSpec,
    start_time_ms: i64,
    transcoder: &dyn Transcoder,
    classifier: &dyn Classifier,
    map: &LabelMap,
    alpha: f64,
    capacity: usize,
) -> Result<DetectionTimeline>
where
    I: Iterator<Item = Result<ThirdOctaveFrame>> + Send,
{
    let resolved = map.resolve(classifier.class_names())?;
    let mut timeline = DetectionTimeline::new(resolved.labels());
    let mut window = ThirdOctaveSpectrogram::new(spec.clone(), start_time_ms);
    let per = frames_per_window(&window);
    let frame_ms = spec.frame_ms() as i64;
    let mut seen = 0usize;
    run_chain(frames, capacity, |frame| {
        if window.is_empty() {
            window.start_time_ms = start_time_ms + seen as i64 * frame_ms;
        }
        window.push(frame)?;
        seen += 1;
        if window.len() == per {
            let mel = transcoder.transcode(&window)?;
            let scores = classifier.classify(&mel)?;
            timeline.push_scores(window.start_time_ms, &scores, &resolved, alpha)?;
            window.frames.clear();
        }
        Ok(())
    })?;
    if timeline.windows.is_empty() {
        return Err(invalid(format!(
            "stream of {} frames is shorter than one {per}-frame window",
            seen
        )));
    }
    Ok(timeline)
}
