//! Space Saving heavy-hitter counters with worst-case O(1) updates.
//!
//! The table keeps at most `capacity` keyed counters. A hit increments the
//! key's counter; a miss on a full table replaces the minimum counter, so the
//! stored count stays an upper bound on the key's true update count and
//! `count - overestimation` a lower bound. The classic error bound follows:
//! no counter overestimates by more than `total_updates / capacity`.
//!
//! Counters live in buckets of equal count chained in ascending order (the
//! stream-summary layout), so increments and minimum replacement are constant
//! time; there is no heap or scan on the update path.

use std::collections::HashMap;
use std::hash::Hash;

const NIL: usize = usize::MAX;

#[derive(Clone, Debug)]
struct Slot<K> {
    key: K,
    overestimation: u64,
    bucket: usize,
    prev: usize,
    next: usize,
}

#[derive(Clone, Debug)]
struct Bucket {
    count: u64,
    head: usize,
    tail: usize,
    prev: usize,
    next: usize,
}

/// Bounded counter table yielding upper and lower frequency bounds per key.
#[derive(Clone, Debug)]
pub struct SpaceSaving<K> {
    capacity: usize,
    slots: Vec<Slot<K>>,
    buckets: Vec<Bucket>,
    free_buckets: Vec<usize>,
    min_bucket: usize,
    index: HashMap<K, usize>,
    total_updates: u64,
}

impl<K: Eq + Hash + Copy> SpaceSaving<K> {
    /// Creates a table with room for `capacity` counters.
    ///
    /// Panics when `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        SpaceSaving {
            capacity,
            slots: Vec::with_capacity(capacity),
            buckets: Vec::new(),
            free_buckets: Vec::new(),
            min_bucket: NIL,
            index: HashMap::with_capacity(capacity),
            total_updates: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of resident counters.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total updates ever applied; equals the sum of all resident counts.
    pub fn total_updates(&self) -> u64 {
        self.total_updates
    }

    fn min_count(&self) -> u64 {
        if self.min_bucket == NIL {
            0
        } else {
            self.buckets[self.min_bucket].count
        }
    }

    /// Counts one occurrence of `key`.
    ///
    /// On a full table a miss evicts the entry at the head of the minimum
    /// bucket (the one that has held the minimum count longest), and the new
    /// key inherits `min_count` as its overestimation.
    pub fn increment(&mut self, key: K) {
        self.total_updates += 1;
        if let Some(&slot) = self.index.get(&key) {
            self.advance(slot);
            return;
        }
        if self.slots.len() < self.capacity {
            let slot = self.slots.len();
            self.slots.push(Slot {
                key,
                overestimation: 0,
                bucket: NIL,
                prev: NIL,
                next: NIL,
            });
            self.index.insert(key, slot);
            let bucket = if self.min_bucket != NIL && self.buckets[self.min_bucket].count == 1 {
                self.min_bucket
            } else {
                let b = self.alloc_bucket(1);
                self.buckets[b].next = self.min_bucket;
                if self.min_bucket != NIL {
                    self.buckets[self.min_bucket].prev = b;
                }
                self.min_bucket = b;
                b
            };
            self.append_to_bucket(slot, bucket);
        } else {
            let bucket = self.min_bucket;
            let victim = self.buckets[bucket].head;
            let min_count = self.buckets[bucket].count;
            let old_key = self.slots[victim].key;
            self.index.remove(&old_key);
            self.slots[victim].key = key;
            self.slots[victim].overestimation = min_count;
            self.index.insert(key, victim);
            self.advance(victim);
        }
    }

    /// Moves `slot` from its bucket (count c) to the bucket with count c+1.
    fn advance(&mut self, slot: usize) {
        let bucket = self.slots[slot].bucket;
        let count = self.buckets[bucket].count;
        let next = self.buckets[bucket].next;
        let target = if next != NIL && self.buckets[next].count == count + 1 {
            next
        } else {
            let b = self.alloc_bucket(count + 1);
            self.buckets[b].prev = bucket;
            self.buckets[b].next = next;
            self.buckets[bucket].next = b;
            if next != NIL {
                self.buckets[next].prev = b;
            }
            b
        };
        self.detach_from_bucket(slot);
        self.append_to_bucket(slot, target);
        if self.buckets[bucket].head == NIL {
            let (p, n) = (self.buckets[bucket].prev, self.buckets[bucket].next);
            if p != NIL {
                self.buckets[p].next = n;
            }
            if n != NIL {
                self.buckets[n].prev = p;
            }
            if self.min_bucket == bucket {
                self.min_bucket = n;
            }
            self.free_buckets.push(bucket);
        }
    }

    fn alloc_bucket(&mut self, count: u64) -> usize {
        let bucket = Bucket {
            count,
            head: NIL,
            tail: NIL,
            prev: NIL,
            next: NIL,
        };
        match self.free_buckets.pop() {
            Some(i) => {
                self.buckets[i] = bucket;
                i
            }
            None => {
                self.buckets.push(bucket);
                self.buckets.len() - 1
            }
        }
    }

    fn append_to_bucket(&mut self, slot: usize, bucket: usize) {
        let tail = self.buckets[bucket].tail;
        self.slots[slot].bucket = bucket;
        self.slots[slot].prev = tail;
        self.slots[slot].next = NIL;
        if tail != NIL {
            self.slots[tail].next = slot;
        } else {
            self.buckets[bucket].head = slot;
        }
        self.buckets[bucket].tail = slot;
    }

    fn detach_from_bucket(&mut self, slot: usize) {
        let bucket = self.slots[slot].bucket;
        let (p, n) = (self.slots[slot].prev, self.slots[slot].next);
        if p != NIL {
            self.slots[p].next = n;
        } else {
            self.buckets[bucket].head = n;
        }
        if n != NIL {
            self.slots[n].prev = p;
        } else {
            self.buckets[bucket].tail = p;
        }
        self.slots[slot].bucket = NIL;
        self.slots[slot].prev = NIL;
        self.slots[slot].next = NIL;
    }

    /// `(upper, lower)` bounds on the number of updates of `key`.
    ///
    /// A resident key reports `(count, count - overestimation)`. An absent
    /// key reports `(min_count, 0)` on a full table (it could have been
    /// evicted with at most that many updates) and `(0, 0)` otherwise.
    pub fn query(&self, key: &K) -> (u64, u64) {
        match self.index.get(key) {
            Some(&slot) => {
                let count = self.buckets[self.slots[slot].bucket].count;
                (count, count - self.slots[slot].overestimation)
            }
            None if self.slots.len() == self.capacity => (self.min_count(), 0),
            None => (0, 0),
        }
    }

    /// All resident entries as `(key, upper, lower)`, in slot order (stable
    /// for a given update sequence).
    pub fn entries(&self) -> impl Iterator<Item = (K, u64, u64)> + '_ {
        self.slots.iter().map(|s| {
            let count = self.buckets[s.bucket].count;
            (s.key, count, count - s.overestimation)
        })
    }

    #[cfg(test)]
    fn check_invariants(&self) {
        assert!(self.slots.len() <= self.capacity);
        assert_eq!(self.index.len(), self.slots.len());
        let sum: u64 = self.entries().map(|(_, upper, _)| upper).sum();
        assert_eq!(sum, self.total_updates, "counts are not conserved");
        // Bucket chain strictly ascending from min_bucket, membership sane.
        let mut b = self.min_bucket;
        let mut last = 0u64;
        let mut seen = 0usize;
        while b != NIL {
            let bucket = &self.buckets[b];
            assert!(bucket.count > last);
            last = bucket.count;
            let mut s = bucket.head;
            let mut prev = NIL;
            while s != NIL {
                assert_eq!(self.slots[s].bucket, b);
                assert_eq!(self.slots[s].prev, prev);
                assert_eq!(self.index[&self.slots[s].key], s);
                seen += 1;
                prev = s;
                s = self.slots[s].next;
            }
            assert_eq!(bucket.tail, prev);
            b = bucket.next;
        }
        assert_eq!(seen, self.slots.len());
    }
}
