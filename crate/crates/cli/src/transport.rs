use std::time::Duration;

use wsn_twin::gateway::{HttpReply, UplinkTransport};

/// Blocking HTTP client for a real ThingSpeak-style endpoint. Runs on the
/// simulation thread, never on the async runtime.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, reqwest::Error> {
        Ok(HttpTransport {
            client: reqwest::blocking::Client::builder().timeout(timeout).build()?,
        })
    }
}

impl UplinkTransport for HttpTransport {
    fn get(&mut self, url: &str) -> Result<HttpReply, String> {
        let resp = self.client.get(url).send().map_err(|e| e.without_url().to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.without_url().to_string())?;
        Ok(HttpReply { status, body })
    }
}
