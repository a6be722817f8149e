use std::collections::BTreeSet;
use std::fs::File;
use std::os::unix::fs::FileExt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};

pub const DEFAULT_PAGE_SIZE: usize = 64 * 1024;
pub const DEFAULT_CACHE_PAGES: usize = 4096;

static NEXT_FILE_ID: AtomicU64 = AtomicU64::new(0);

/// An open, read-only data file.
#[derive(Debug)]
pub struct DataFile {
    id: u64,
    path: PathBuf,
    file: File,
    len: u64,
}

impl DataFile {
    pub fn open(path: PathBuf) -> Result<Self> {
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let len = file.metadata().map_err(|e| Error::io(&path, e))?.len();
        Ok(Self {
            id: NEXT_FILE_ID.fetch_add(1, Ordering::Relaxed),
            path,
            file,
            len,
        })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

type PageKey = (u64, u64);

struct Slot {
    data: Arc<[u8]>,
    freq: u64,
    tick: u64,
}

#[derive(Default)]
struct Inner {
    slots: FxHashMap<PageKey, Slot>,
    // (frequency, last use, key): the first entry is the eviction victim
    order: BTreeSet<(u64, u64, PageKey)>,
    tick: u64,
    hits: u64,
    misses: u64,
    evictions: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub resident: usize,
}

/// Least-frequently-used page cache; ties are broken by least recent use.
pub struct PageCache {
    page_size: usize,
    capacity: usize,
    inner: Mutex<Inner>,
}

impl PageCache {
    pub fn new(capacity: usize, page_size: usize) -> Self {
        assert!(page_size > 0);
        Self {
            page_size,
            capacity,
            inner: Mutex::new(Inner::default()),
        }
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, file: &DataFile, page: u64) -> Result<Arc<[u8]>> {
        let key = (file.id, page);
        {
            let mut g = self.inner.lock().unwrap();
            let inner = &mut *g;
            inner.tick += 1;
            let tick = inner.tick;
            if let Some(slot) = inner.slots.get_mut(&key) {
                inner.order.remove(&(slot.freq, slot.tick, key));
                slot.freq += 1;
                slot.tick = tick;
                inner.order.insert((slot.freq, slot.tick, key));
                inner.hits += 1;
                return Ok(slot.data.clone());
            }
            inner.misses += 1;
        }
        let data = self.load(file, page)?;
        if self.capacity == 0 {
            return Ok(data);
        }
        let mut g = self.inner.lock().unwrap();
        let inner = &mut *g;
        if inner.slots.contains_key(&key) {
            return Ok(data);
        }
        while inner.slots.len() >= self.capacity {
            let victim = inner.order.pop_first().expect("cache order out of sync");
            inner.slots.remove(&victim.2);
            inner.evictions += 1;
        }
        let tick = inner.tick;
        inner.order.insert((1, tick, key));
        inner.slots.insert(
            key,
            Slot {
                data: data.clone(),
                freq: 1,
                tick,
            },
        );
        Ok(data)
    }

    fn load(&self, file: &DataFile, page: u64) -> Result<Arc<[u8]>> {
        let start = page * self.page_size as u64;
        if start >= file.len {
            return Err(Error::Internal(format!(
                "page {page} beyond end of {}",
                file.path.display()
            )));
        }
        let n = (file.len - start).min(self.page_size as u64) as usize;
        let mut buf = vec![0u8; n];
        file.file
            .read_exact_at(&mut buf, start)
            .map_err(|e| Error::io(&file.path, e))?;
        Ok(buf.into())
    }

    pub fn stats(&self) -> CacheStats {
        let g = self.inner.lock().unwrap();
        CacheStats {
            hits: g.hits,
            misses: g.misses,
            evictions: g.evictions,
            resident: g.slots.len(),
        }
    }

    /// Drops every resident page (counters are kept).
    pub fn clear(&self) {
        let mut g = self.inner.lock().unwrap();
        g.slots.clear();
        g.order.clear();
    }
}

/// Sequential byte access to one file through the cache.
pub(crate) struct PageReader<'a> {
    cache: &'a PageCache,
    file: &'a DataFile,
    cur: Option<(u64, Arc<[u8]>)>,
}

impl<'a> PageReader<'a> {
    pub fn new(cache: &'a PageCache, file: &'a DataFile) -> Self {
        Self {
            cache,
            file,
            cur: None,
        }
    }

    pub fn read(&mut self, mut off: u64, len: usize, out: &mut Vec<u8>) -> Result<()> {
        let ps = self.cache.page_size as u64;
        let end = off + len as u64;
        if end > self.file.len {
            return Err(Error::Internal(format!(
                "read past end of {} ({end} > {})",
                self.file.path.display(),
                self.file.len
            )));
        }
        while off < end {
            let page = off / ps;
            if self.cur.as_ref().is_none_or(|(p, _)| *p != page) {
                self.cur = Some((page, self.cache.get(self.file, page)?));
            }
            let data = &self.cur.as_ref().unwrap().1;
            let in_page = (off - page * ps) as usize;
            let take = ((end - off) as usize).min(data.len() - in_page);
            out.extend_from_slice(&data[in_page..in_page + take]);
            off += take as u64;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file_with(bytes: &[u8]) -> (tempfile::TempDir, DataFile) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.dat");
        std::fs::write(&p, bytes).unwrap();
        let f = DataFile::open(p).unwrap();
        (dir, f)
    }

    #[test]
    fn evicts_least_frequently_used() {
        let (_d, f) = file_with(&[0u8; 40]);
        let cache = PageCache::new(2, 10);
        cache.get(&f, 0).unwrap();
        cache.get(&f, 0).unwrap();
        cache.get(&f, 1).unwrap();
        cache.get(&f, 2).unwrap(); // evicts page 1 (freq 1)
        let s = cache.stats();
        assert_eq!((s.hits, s.misses, s.evictions, s.resident), (1, 3, 1, 2));
        cache.get(&f, 0).unwrap();
        assert_eq!(cache.stats().hits, 2);
        cache.get(&f, 1).unwrap();
        assert_eq!(cache.stats().misses, 4);
        assert!(cache.stats().resident <= 2);
    }

    #[test]
    fn reader_spans_pages() {
        let bytes: Vec<u8> = (0..100u8).collect();
        let (_d, f) = file_with(&bytes);
        let cache = PageCache::new(4, 16);
        let mut r = PageReader::new(&cache, &f);
        let mut out = Vec::new();
        r.read(10, 30, &mut out).unwrap();
        assert_eq!(out, bytes[10..40]);
        out.clear();
        r.read(96, 4, &mut out).unwrap();
        assert_eq!(out, bytes[96..]);
        assert!(r.read(99, 2, &mut out).is_err());
    }
}
