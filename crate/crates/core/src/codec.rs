//! Canonical binary encoding shared by transactions, blocks and state snapshots.
//!
//! Every integer is big-endian with a fixed width. Variable-length values
//! (byte strings, UTF-8 strings, lists) carry a `u32` big-endian length
//! prefix. Booleans are a single byte `0x00`/`0x01`; options are a tag byte
//! `0x00` (none) or `0x01` followed by the value. Enum tags are one byte.
//!
//! Decoding is strict: any byte sequence that is not the exact encoding of
//! some value is rejected, so a decoded value always re-encodes to the same
//! bytes. This is what lets a flipped byte in a stored block surface either
//! as a decode failure or as a hash mismatch, never as a silent no-op.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("unexpected end of input: needed {needed} bytes, {remaining} remaining")]
    UnexpectedEof { needed: usize, remaining: usize },
    #[error("invalid tag {tag} for {what}")]
    InvalidTag { what: &'static str, tag: u8 },
    #[error("invalid utf-8 in string field")]
    InvalidUtf8,
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("invalid value: {0}")]
    Invalid(String),
}

pub type CodecResult<T> = Result<T, CodecError>;

/// Append-only byte sink for canonical encodings.
#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u128(&mut self, v: u128) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    /// Raw fixed-width bytes, no length prefix.
    pub fn fixed(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.len(bytes.len());
        self.fixed(bytes)
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn len(&mut self, n: usize) -> &mut Self {
        let n = u32::try_from(n).expect("collection longer than u32::MAX");
        self.u32(n)
    }

    pub fn value<T: Encode + ?Sized>(&mut self, v: &T) -> &mut Self {
        v.encode(self);
        self
    }

    pub fn option<T: Encode>(&mut self, v: &Option<T>) -> &mut Self {
        match v {
            None => self.u8(0),
            Some(v) => self.u8(1).value(v),
        }
    }

    pub fn list<T: Encode>(&mut self, items: &[T]) -> &mut Self {
        self.len(items.len());
        for item in items {
            item.encode(self);
        }
        self
    }
}

/// Cursor over a canonical encoding.
#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Self { input, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.input.len() - self.pos
    }

    pub fn finish(&self) -> CodecResult<()> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }

    pub fn take(&mut self, n: usize) -> CodecResult<&'a [u8]> {
        if self.remaining() < n {
            return Err(CodecError::UnexpectedEof {
                needed: n,
                remaining: self.remaining(),
            });
        }
        let out = &self.input[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn array<const N: usize>(&mut self) -> CodecResult<[u8; N]> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> CodecResult<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> CodecResult<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(CodecError::InvalidTag { what: "bool", tag }),
        }
    }

    pub fn u16(&mut self) -> CodecResult<u16> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> CodecResult<u32> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> CodecResult<u64> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn i64(&mut self) -> CodecResult<i64> {
        Ok(i64::from_be_bytes(self.array()?))
    }

    pub fn u128(&mut self) -> CodecResult<u128> {
        Ok(u128::from_be_bytes(self.array()?))
    }

    pub fn length(&mut self) -> CodecResult<usize> {
        let n = self.u32()? as usize;
        // A length can never exceed what is left; rejecting early avoids
        // huge allocations on corrupted input.
        if n > self.remaining() {
            return Err(CodecError::UnexpectedEof {
                needed: n,
                remaining: self.remaining(),
            });
        }
        Ok(n)
    }

    pub fn bytes(&mut self) -> CodecResult<Vec<u8>> {
        let n = self.length()?;
        Ok(self.take(n)?.to_vec())
    }

    pub fn string(&mut self) -> CodecResult<String> {
        String::from_utf8(self.bytes()?).map_err(|_| CodecError::InvalidUtf8)
    }

    pub fn value<T: Decode>(&mut self) -> CodecResult<T> {
        T::decode(self)
    }

    pub fn option<T: Decode>(&mut self) -> CodecResult<Option<T>> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(T::decode(self)?)),
            tag => Err(CodecError::InvalidTag { what: "option", tag }),
        }
    }

    pub fn list<T: Decode>(&mut self) -> CodecResult<Vec<T>> {
        let n = self.u32()? as usize;
        // every element occupies at least one byte
        if n > self.remaining() {
            return Err(CodecError::UnexpectedEof {
                needed: n,
                remaining: self.remaining(),
            });
        }
        (0..n).map(|_| T::decode(self)).collect()
    }
}

pub trait Encode {
    fn encode(&self, enc: &mut Encoder);

    fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.into_bytes()
    }
}

pub trait Decode: Sized {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self>;

    /// Decodes a complete value, rejecting trailing bytes.
    fn from_canonical_bytes(bytes: &[u8]) -> CodecResult<Self> {
        let mut dec = Decoder::new(bytes);
        let v = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(v)
    }
}

impl Encode for u64 {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(*self);
    }
}

impl Decode for u64 {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        dec.u64()
    }
}

impl Encode for i64 {
    fn encode(&self, enc: &mut Encoder) {
        enc.i64(*self);
    }
}

impl Decode for i64 {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        dec.i64()
    }
}

impl Encode for u128 {
    fn encode(&self, enc: &mut Encoder) {
        enc.u128(*self);
    }
}

impl Decode for u128 {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        dec.u128()
    }
}

impl Encode for String {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(self);
    }
}

impl Encode for str {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(self);
    }
}

impl Decode for String {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        dec.string()
    }
}

impl<A: Encode, B: Encode> Encode for (A, B) {
    fn encode(&self, enc: &mut Encoder) {
        self.0.encode(enc);
        self.1.encode(enc);
    }
}

impl<A: Decode, B: Decode> Decode for (A, B) {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Ok((A::decode(dec)?, B::decode(dec)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn integers_are_big_endian() {
        let mut enc = Encoder::new();
        enc.u32(0x0102_0304).u16(0x0506);
        assert_eq!(enc.as_bytes(), &[1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn non_canonical_bool_rejected() {
        let mut dec = Decoder::new(&[2]);
        assert_eq!(
            dec.bool(),
            Err(CodecError::InvalidTag { what: "bool", tag: 2 })
        );
    }

    #[test]
    fn oversized_length_rejected_without_allocating() {
        let bytes = [0xff, 0xff, 0xff, 0xff, 1];
        assert!(matches!(
            Decoder::new(&bytes).bytes(),
            Err(CodecError::UnexpectedEof { .. })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = 7u64.to_canonical_bytes();
        bytes.push(0);
        assert_eq!(u64::from_canonical_bytes(&bytes), Err(CodecError::TrailingBytes(1)));
    }

    proptest! {
        #[test]
        fn string_pairs_roundtrip(a in ".*", b in any::<i64>()) {
            let v = (a, b);
            let bytes = v.to_canonical_bytes();
            prop_assert_eq!(<(String, i64)>::from_canonical_bytes(&bytes).unwrap(), v);
        }
    }
}
