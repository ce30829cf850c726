use crate::nn::Network;

/// Position of one weight inside its layer's row-major weight tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightLocation {
    pub layer: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Segment {
    layer: usize,
    start: usize,
    len: usize,
}

/// Bijection between global weight indices `[0, NT)` and layer-local positions.
///
/// Weights are enumerated layer by layer in network order, row-major within a
/// layer. Biases are not part of the enumeration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightIndex {
    segments: Vec<Segment>,
    total: usize,
}

impl WeightIndex {
    pub fn new(network: &Network) -> Self {
        let mut segments = Vec::new();
        let mut start = 0;
        for (layer, l) in network.layers().iter().enumerate() {
            let len = l.weight_count();
            if len > 0 {
                segments.push(Segment { layer, start, len });
                start += len;
            }
        }
        WeightIndex {
            segments,
            total: start,
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn locate(&self, global: usize) -> Option<WeightLocation> {
        if global >= self.total {
            return None;
        }
        let pos = self.segments.partition_point(|s| s.start + s.len <= global);
        let s = self.segments[pos];
        Some(WeightLocation {
            layer: s.layer,
            offset: global - s.start,
        })
    }

    pub fn global(&self, loc: WeightLocation) -> Option<usize> {
        self.segments
            .iter()
            .find(|s| s.layer == loc.layer)
            .filter(|s| loc.offset < s.len)
            .map(|s| s.start + loc.offset)
    }

    /// Global index range covered by layer `layer`, if it carries weights.
    pub fn layer_range(&self, layer: usize) -> Option<std::ops::Range<usize>> {
        self.segments
            .iter()
            .find(|s| s.layer == layer)
            .map(|s| s.start..s.start + s.len)
    }
}
