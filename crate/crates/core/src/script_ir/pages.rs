use super::parse::is_cue_at;
use super::{RawScript, SourceKind};

/// Splits `text` into pages of at most `max_segments_per_page` dialogue
/// cues. Boundaries only fall at the start of a block that follows a blank
/// line; scene headings and action directly preceding an overflowing cue
/// block move to the new page with it. A single block holding more cues
/// than the limit becomes a page of its own.
pub fn segment_pages(text: &str, max_segments_per_page: usize) -> RawScript {
    let max = max_segments_per_page.max(1);
    let lines: Vec<&str> = text.split('\n').collect();

    // (start byte, cue count) per blank-separated block
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    let mut pos = 0;
    let mut in_block = false;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            in_block = false;
        } else {
            if !in_block {
                blocks.push((pos, 0));
                in_block = true;
            }
            if is_cue_at(&lines, i) {
                blocks.last_mut().unwrap().1 += 1;
            }
        }
        pos += line.len() + 1;
    }

    let mut byte_starts = vec![0usize];
    let mut count = 0;
    let mut pending: Option<usize> = None;
    for (start, cues) in blocks {
        if cues == 0 {
            pending.get_or_insert(start);
            continue;
        }
        if count > 0 && count + cues > max {
            let boundary = pending.unwrap_or(start);
            if boundary > *byte_starts.last().unwrap() {
                byte_starts.push(boundary);
                count = 0;
            }
        }
        count += cues;
        pending = None;
    }

    let mut pages = Vec::with_capacity(byte_starts.len());
    let mut targets = byte_starts.iter().peekable();
    for (ci, (bi, _)) in text.char_indices().enumerate() {
        if targets.peek() == Some(&&bi) {
            pages.push(ci);
            targets.next();
        }
    }
    if pages.is_empty() {
        pages.push(0);
    }

    RawScript {
        text: text.to_string(),
        source_kind: SourceKind::Screenplay,
        pages,
    }
}
