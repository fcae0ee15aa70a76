//! Canonical byte encoding for shuffle keys and values.
//!
//! Keys are grouped and partitioned by their encoded bytes, so an
//! implementation must guarantee that equal keys encode to equal bytes and
//! distinct keys to distinct bytes.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input: needed {needed} more byte(s)")]
    Truncated { needed: usize },
    #[error("{0} trailing byte(s) after value")]
    Trailing(usize),
    #[error("invalid encoding: {0}")]
    Invalid(String),
}

/// A value with a stable, canonical byte serialization.
pub trait Codec: Sized {
    /// Appends the canonical encoding of `self` to `buf`.
    fn encode(&self, buf: &mut Vec<u8>);

    /// Decodes a value from the front of `reader`, advancing it.
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, DecodeError>;

    /// Decodes a value that must occupy the whole of `bytes`.
    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut reader = Reader::new(bytes);
        let value = Self::decode_from(&mut reader)?;
        match reader.remaining() {
            0 => Ok(value),
            n => Err(DecodeError::Trailing(n)),
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.encode(&mut buf);
        buf
    }
}

/// Cursor over an encoded byte slice.
#[derive(Debug, Clone)]
pub struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes }
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.bytes.len() < n {
            return Err(DecodeError::Truncated {
                needed: n - self.bytes.len(),
            });
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    pub fn take_array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }
}

macro_rules! impl_codec_int {
    ($($t:ty),*) => {$(
        impl Codec for $t {
            fn encode(&self, buf: &mut Vec<u8>) {
                buf.extend_from_slice(&self.to_be_bytes());
            }

            fn decode_from(reader: &mut Reader<'_>) -> Result<Self, DecodeError> {
                Ok(<$t>::from_be_bytes(reader.take_array()?))
            }
        }
    )*};
}

impl_codec_int!(u8, u16, u32, u64, i32, i64);

impl Codec for String {
    fn encode(&self, buf: &mut Vec<u8>) {
        (self.len() as u32).encode(buf);
        buf.extend_from_slice(self.as_bytes());
    }

    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let len = u32::decode_from(reader)? as usize;
        let bytes = reader.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| DecodeError::Invalid(e.to_string()))
    }
}

impl Codec for Vec<u8> {
    fn encode(&self, buf: &mut Vec<u8>) {
        (self.len() as u32).encode(buf);
        buf.extend_from_slice(self);
    }

    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let len = u32::decode_from(reader)? as usize;
        Ok(reader.take(len)?.to_vec())
    }
}

impl<A: Codec, B: Codec> Codec for (A, B) {
    fn encode(&self, buf: &mut Vec<u8>) {
        self.0.encode(buf);
        self.1.encode(buf);
    }

    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok((A::decode_from(reader)?, B::decode_from(reader)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn string_roundtrip() {
        let s = "01F-157.2N".to_string();
        assert_eq!(String::decode(&s.to_bytes()).unwrap(), s);
    }

    #[test]
    fn tuple_roundtrip() {
        let v = (String::from("k"), 42u64);
        assert_eq!(<(String, u64)>::decode(&v.to_bytes()).unwrap(), v);
    }

    #[test]
    fn truncated_and_trailing() {
        assert_eq!(
            u32::decode(&[0, 1]),
            Err(DecodeError::Truncated { needed: 2 })
        );
        assert_eq!(u16::decode(&[0, 1, 2]), Err(DecodeError::Trailing(1)));
    }
}
