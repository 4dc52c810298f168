//! Metadata of the 26 equal-length UEA classification problems.

/// Expected shape of one archive problem. `sampling_frequency` is in Hz and
/// present only where the recording rate is documented.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchiveEntry {
    pub name: &'static str,
    pub kind: &'static str,
    pub train: usize,
    pub test: usize,
    pub dimensions: usize,
    pub length: usize,
    pub classes: usize,
    pub sampling_frequency: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
const fn entry(
    name: &'static str,
    kind: &'static str,
    train: usize,
    test: usize,
    dimensions: usize,
    length: usize,
    classes: usize,
    sampling_frequency: Option<f64>,
) -> ArchiveEntry {
    ArchiveEntry {
        name,
        kind,
        train,
        test,
        dimensions,
        length,
        classes,
        sampling_frequency,
    }
}

pub const UEA_ARCHIVE: [ArchiveEntry; 26] = [
    entry(
        "ArticularyWordRecognition",
        "MOTION",
        275,
        300,
        9,
        144,
        25,
        Some(200.0),
    ),
    entry("AtrialFibrillation", "ECG", 15, 15, 2, 640, 3, Some(128.0)),
    entry("BasicMotions", "HAR", 40, 40, 6, 100, 4, Some(10.0)),
    entry("Cricket", "HAR", 108, 72, 6, 1197, 12, Some(184.0)),
    entry("DuckDuckGeese", "AUDIO", 50, 50, 1345, 270, 5, None),
    entry("EigenWorms", "MOTION", 128, 131, 6, 17984, 5, None),
    entry("Epilepsy", "HAR", 137, 138, 3, 206, 4, Some(16.0)),
    entry("EthanolConcentration", "OTHER", 261, 263, 3, 1751, 4, None),
    entry("ERing", "HAR", 30, 270, 4, 65, 6, None),
    entry("FaceDetection", "MEG", 5890, 3524, 144, 62, 2, Some(250.0)),
    entry("FingerMovements", "EEG", 316, 100, 28, 50, 2, Some(100.0)),
    entry("HandMovementDirection", "EEG", 160, 74, 10, 400, 4, None),
    entry("Handwriting", "HAR", 150, 850, 3, 152, 26, None),
    entry("Heartbeat", "AUDIO", 204, 205, 61, 405, 2, None),
    entry("Libras", "HAR", 180, 180, 2, 45, 15, None),
    entry("LSST", "OTHER", 2459, 2466, 6, 36, 14, None),
    entry("MotorImagery", "EEG", 278, 100, 64, 3000, 2, Some(1000.0)),
    entry("NATOPS", "HAR", 180, 180, 24, 51, 6, None),
    entry("PenDigits", "MOTION", 7494, 3498, 2, 8, 10, None),
    entry("PEMS-SF", "OTHER", 267, 173, 963, 144, 7, None),
    entry("Phoneme", "AUDIO", 3315, 3353, 11, 217, 39, None),
    entry("RacketSports", "HAR", 151, 152, 6, 30, 4, Some(10.0)),
    entry(
        "SelfRegulationSCP1",
        "EEG",
        268,
        293,
        6,
        896,
        2,
        Some(256.0),
    ),
    entry(
        "SelfRegulationSCP2",
        "EEG",
        200,
        180,
        7,
        1152,
        2,
        Some(256.0),
    ),
    entry("StandWalkJump", "ECG", 12, 15, 4, 2500, 3, Some(500.0)),
    entry(
        "UWaveGestureLibrary",
        "HAR",
        120,
        320,
        3,
        315,
        8,
        Some(100.0),
    ),
];

pub fn archive_info(name: &str) -> Option<&'static ArchiveEntry> {
    UEA_ARCHIVE
        .iter()
        .find(|e| e.name.eq_ignore_ascii_case(name))
}

/// Bundled default sampling frequency in Hz.
pub fn sampling_frequency(name: &str) -> Option<f64> {
    archive_info(name).and_then(|e| e.sampling_frequency)
}
