#![allow(dead_code)]

use std::io::{self, Read};

use hri_bridge::codec::{Document, Value};
use proptest::prelude::*;

/// Which value types a generated document may contain.
#[derive(Clone, Copy)]
pub struct DocShape {
    pub binary: bool,
    pub int32: bool,
    /// Int64 values restricted to what a double holds exactly.
    pub exact_int64: bool,
    pub max_blob: usize,
}

impl DocShape {
    pub const BSON: DocShape = DocShape {
        binary: true,
        int32: true,
        exact_int64: false,
        max_blob: 2 * 1024 * 1024,
    };
    pub const JSON: DocShape = DocShape {
        binary: false,
        int32: false,
        exact_int64: true,
        max_blob: 0,
    };
}

fn key() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9_ é/.-]{0,10}"
}

fn leaf(shape: DocShape) -> BoxedStrategy<Value> {
    let int64 = if shape.exact_int64 {
        (-(1i64 << 53)..=(1i64 << 53)).boxed()
    } else {
        any::<i64>().boxed()
    };
    let mut options: Vec<(u32, BoxedStrategy<Value>)> = vec![
        (3, any::<f64>().prop_filter("finite", |v| v.is_finite()).prop_map(Value::Float64).boxed()),
        (3, "\\PC{0,16}".prop_map(Value::String).boxed()),
        (1, any::<bool>().prop_map(Value::Bool).boxed()),
        (2, int64.prop_map(Value::Int64).boxed()),
    ];
    if shape.int32 {
        options.push((2, any::<i32>().prop_map(Value::Int32).boxed()));
    }
    if shape.binary {
        options.push((2, proptest::collection::vec(any::<u8>(), 0..64).prop_map(Value::Binary).boxed()));
        // Occasional large blob, filled cheaply.
        let max = shape.max_blob;
        options.push((
            1,
            (0..=max, any::<u8>())
                .prop_map(|(n, fill)| Value::Binary(vec![fill; n]))
                .boxed(),
        ));
    }
    proptest::strategy::Union::new_weighted(options).boxed()
}

pub fn value(shape: DocShape) -> BoxedStrategy<Value> {
    // depth 7 below the root document keeps total nesting within 8
    leaf(shape)
        .prop_recursive(7, 48, 6, move |inner| {
            prop_oneof![
                proptest::collection::vec(inner.clone(), 0..6).prop_map(Value::Array),
                proptest::collection::vec((key(), inner), 0..6).prop_map(|entries| {
                    Value::Document(entries.into_iter().collect::<Document>())
                }),
            ]
        })
        .boxed()
}

pub fn document(shape: DocShape) -> BoxedStrategy<Document> {
    proptest::collection::vec((key(), value(shape)), 0..8)
        .prop_map(|entries| entries.into_iter().collect::<Document>())
        .boxed()
}

/// Reader handing out data in caller-chosen chunk sizes.
pub struct ChunkedReader<'a> {
    data: &'a [u8],
    sizes: Vec<usize>,
    next: usize,
}

impl<'a> ChunkedReader<'a> {
    pub fn new(data: &'a [u8], sizes: Vec<usize>) -> Self {
        ChunkedReader { data, sizes, next: 0 }
    }
}

impl Read for ChunkedReader<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.data.is_empty() || buf.is_empty() {
            return Ok(0);
        }
        let size = if self.sizes.is_empty() {
            1
        } else {
            self.sizes[self.next % self.sizes.len()].max(1)
        };
        self.next += 1;
        let n = size.min(buf.len()).min(self.data.len());
        buf[..n].copy_from_slice(&self.data[..n]);
        self.data = &self.data[n..];
        Ok(n)
    }
}
