//! 64-bit content fingerprints embedded in artifact headers.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Incremental fingerprint over raw bytes, numbers and JSON values.
#[derive(Default)]
pub struct Fingerprinter {
    hasher: Sha256,
}

impl Fingerprinter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.hasher.update((b.len() as u64).to_le_bytes());
        self.hasher.update(b);
        self
    }

    pub fn f64(&mut self, x: f64) -> &mut Self {
        self.hasher.update(x.to_bits().to_le_bytes());
        self
    }

    pub fn f64s(&mut self, xs: &[f64]) -> &mut Self {
        self.hasher.update((xs.len() as u64).to_le_bytes());
        for x in xs {
            self.hasher.update(x.to_bits().to_le_bytes());
        }
        self
    }

    pub fn usize(&mut self, x: usize) -> &mut Self {
        self.hasher.update((x as u64).to_le_bytes());
        self
    }

    pub fn usizes(&mut self, xs: &[usize]) -> &mut Self {
        self.hasher.update((xs.len() as u64).to_le_bytes());
        for &x in xs {
            self.hasher.update((x as u64).to_le_bytes());
        }
        self
    }

    /// Canonical JSON: struct fields serialize in declaration order, so the
    /// same value always yields the same text.
    pub fn json<T: Serialize>(&mut self, value: &T) -> &mut Self {
        let text = serde_json::to_string(value).expect("serializable value");
        self.bytes(text.as_bytes())
    }

    pub fn finish(&self) -> u64 {
        let digest = self.hasher.clone().finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(head)
    }
}

pub fn format(fp: u64) -> String {
    format!("{fp:016x}")
}

pub fn parse(text: &str) -> Option<u64> {
    u64::from_str_radix(text.trim(), 16).ok()
}
