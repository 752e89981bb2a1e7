//! On-disk formats: raw IQ captures with a sidecar index, and the CSV
//! tables exchanged between pipeline stages.

mod iq;
mod table;

pub use iq::{
    bits_to_hex, hex_to_bits, read_iq, read_sidecar, write_capture, write_iq, DeviceLabel, SidecarEntry, SAMPLE_BYTES,
    SIDECAR_HEADER,
};
pub use table::{
    diagnostic_rows, feature_header, read_features, read_rows, write_alerts, write_diagnostics, write_features, write_rows,
    AlertRow, DensityRow, DiagnosticRow, FeatureTable, RowError, SweepCsvRow, ThresholdRow, ALERT_HEADER, DENSITY_HEADER,
    DIAGNOSTIC_HEADER, FEATURE_COLUMNS, SWEEP_HEADER, THRESHOLD_HEADER,
};
