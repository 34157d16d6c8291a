use std::sync::Mutex;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn ok(body: impl Into<String>) -> Self {
        Self {
            status: 200,
            body: body.into(),
        }
    }
}

/// Blocking GET. `Err` means no HTTP exchange happened (DNS, connect,
/// timeout); HTTP error statuses come back as `Ok` replies.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<Reply, String>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(20))
    }
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        Self {
            agent: crate::http::agent(timeout),
        }
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<Reply, String> {
        let mut resp = self.agent.get(url).call().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(Reply { status, body })
    }
}

struct Route {
    needle: String,
    /// Served front to back; the last reply repeats.
    replies: Vec<Reply>,
    served: usize,
}

/// Offline transport answering from fixed replies chosen by URL substring.
/// Records every URL it is asked for.
#[derive(Default)]
pub struct CannedTransport {
    routes: Mutex<Vec<Route>>,
    calls: Mutex<Vec<String>>,
    disabled: bool,
}

impl CannedTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Convenience: esearch and efetch bodies, both HTTP 200.
    pub fn pubmed(esearch: impl Into<String>, efetch: impl Into<String>) -> Self {
        Self::new()
            .route("esearch.fcgi", vec![Reply::ok(esearch)])
            .route("efetch.fcgi", vec![Reply::ok(efetch)])
    }

    /// Every request fails as if the network were down.
    pub fn disabled() -> Self {
        Self {
            disabled: true,
            ..Self::default()
        }
    }

    pub fn route(self, needle: impl Into<String>, replies: Vec<Reply>) -> Self {
        assert!(!replies.is_empty(), "a route needs at least one reply");
        self.routes.lock().expect("routes poisoned").push(Route {
            needle: needle.into(),
            replies,
            served: 0,
        });
        self
    }

    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().expect("calls poisoned").clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("calls poisoned").len()
    }
}

impl Transport for CannedTransport {
    fn get(&self, url: &str) -> Result<Reply, String> {
        self.calls.lock().expect("calls poisoned").push(url.to_string());
        if self.disabled {
            return Err("literature transport disabled".into());
        }
        let mut routes = self.routes.lock().expect("routes poisoned");
        let route = routes
            .iter_mut()
            .find(|r| url.contains(&r.needle))
            .ok_or_else(|| format!("no canned reply for {url}"))?;
        let i = route.served.min(route.replies.len() - 1);
        route.served += 1;
        Ok(route.replies[i].clone())
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn get(&self, url: &str) -> Result<Reply, String> {
        (**self).get(url)
    }
}
