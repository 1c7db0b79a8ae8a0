use thiserror::Error;

/// Shape of the simulated NAND device.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlashGeometry {
    pub blocks_per_device: u64,
    pub pages_per_block: u64,
    pub device_page_bytes: u64,
    pub host_page_bytes: u64,
    pub sector_bytes: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("geometry field `{0}` must be non-zero")]
    Zero(&'static str),
    #[error("device page ({device} B) is not a multiple of the host page ({host} B)")]
    DevicePageRatio { device: u64, host: u64 },
    #[error("host page ({host} B) is not a multiple of the sector ({sector} B)")]
    HostPageRatio { host: u64, sector: u64 },
    #[error("device page of {0} B is too small to hold a metadata page")]
    PageTooSmall(u64),
}

impl Default for FlashGeometry {
    fn default() -> Self {
        FlashGeometry {
            blocks_per_device: 64,
            pages_per_block: 128,
            device_page_bytes: 32 * 1024,
            host_page_bytes: 4096,
            sector_bytes: 512,
        }
    }
}

impl FlashGeometry {
    /// Small geometry used by tests and property batteries: 32 blocks of
    /// 16 pages, default page sizes (16 MiB).
    pub fn small() -> Self {
        FlashGeometry {
            blocks_per_device: 32,
            pages_per_block: 16,
            ..FlashGeometry::default()
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        for (name, v) in [
            ("blocks_per_device", self.blocks_per_device),
            ("pages_per_block", self.pages_per_block),
            ("device_page_bytes", self.device_page_bytes),
            ("host_page_bytes", self.host_page_bytes),
            ("sector_bytes", self.sector_bytes),
        ] {
            if v == 0 {
                return Err(GeometryError::Zero(name));
            }
        }
        if !self.device_page_bytes.is_multiple_of(self.host_page_bytes) {
            return Err(GeometryError::DevicePageRatio {
                device: self.device_page_bytes,
                host: self.host_page_bytes,
            });
        }
        if !self.host_page_bytes.is_multiple_of(self.sector_bytes) {
            return Err(GeometryError::HostPageRatio {
                host: self.host_page_bytes,
                sector: self.sector_bytes,
            });
        }
        Ok(())
    }

    pub fn total_pages(&self) -> u64 {
        self.blocks_per_device * self.pages_per_block
    }

    /// Host pages per device page (key slots per mapping entry).
    pub fn subpages(&self) -> u64 {
        self.device_page_bytes / self.host_page_bytes
    }

    pub fn sectors_per_host_page(&self) -> u64 {
        self.host_page_bytes / self.sector_bytes
    }

    pub fn block_of(&self, ppn: u64) -> u64 {
        ppn / self.pages_per_block
    }

    pub fn first_page(&self, block: u64) -> u64 {
        block * self.pages_per_block
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.total_pages() * self.device_page_bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_256_mib_with_eight_subpages() {
        let g = FlashGeometry::default();
        g.validate().unwrap();
        assert_eq!(g.capacity_bytes(), 256 << 20);
        assert_eq!(g.subpages(), 8);
        assert_eq!(g.sectors_per_host_page(), 8);
    }

    #[test]
    fn rejects_bad_ratios() {
        let g = FlashGeometry {
            device_page_bytes: 6000,
            ..FlashGeometry::default()
        };
        assert!(matches!(
            g.validate(),
            Err(GeometryError::DevicePageRatio { .. })
        ));
        let g = FlashGeometry {
            sector_bytes: 3000,
            ..FlashGeometry::default()
        };
        assert!(matches!(
            g.validate(),
            Err(GeometryError::HostPageRatio { .. })
        ));
        let g = FlashGeometry {
            pages_per_block: 0,
            ..FlashGeometry::default()
        };
        assert_eq!(g.validate(), Err(GeometryError::Zero("pages_per_block")));
    }
}
