// SPDX-License-Identifier: Apache-2.0

use parking_lot::Mutex;
use serde::Serialize;

/// A hop in the request data flow, named after the component receiving it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStep {
    /// PEP intercepts the native request.
    PepIntercept,
    /// Context handler builds the request context.
    ContextRequest,
    /// PDP is notified of the request.
    PdpNotify,
    /// PDP fetches the matching policy from the PRP.
    PolicyRetrieval,
    /// PDP asks the context handler for activity information.
    InfoRequest,
    /// Context handler queries the PIP.
    PipQuery,
    /// Context handler hands the information back to the PDP.
    InfoResponse,
    /// PDP writes a provisional update through the context handler.
    ProvisionalUpdate,
    /// PDP returns its decision to the context handler.
    Decision,
    /// Context handler builds the response context for the PEP.
    ContextResponse,
    /// PEP holds the response.
    PepResponse,
    /// PEP hands the obligations to the obligation service.
    ObligationService,
}

pub trait FlowObserver: Send + Sync {
    fn record(&self, step: FlowStep);
}

/// Keeps every recorded step in order.
#[derive(Debug, Default)]
pub struct RecordingObserver {
    steps: Mutex<Vec<FlowStep>>,
}

impl RecordingObserver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> Vec<FlowStep> {
        self.steps.lock().clone()
    }

    /// The trace with each run of back-to-back information round trips
    /// (request, PIP query, response) folded into one.
    pub fn collapsed(&self) -> Vec<FlowStep> {
        let steps = self.steps();
        let mut out: Vec<FlowStep> = Vec::with_capacity(steps.len());
        let mut i = 0;
        while i < steps.len() {
            let round_trip = steps[i..].starts_with(&[FlowStep::InfoRequest, FlowStep::PipQuery, FlowStep::InfoResponse]);
            if round_trip && out.last() == Some(&FlowStep::InfoResponse) {
                i += 3;
                continue;
            }
            out.push(steps[i]);
            i += 1;
        }
        out
    }
}

impl FlowObserver for RecordingObserver {
    fn record(&self, step: FlowStep) {
        self.steps.lock().push(step);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use FlowStep::*;

    #[test]
    fn collapse_folds_repeated_round_trips() {
        let obs = RecordingObserver::new();
        for s in [
            PdpNotify, InfoRequest, PipQuery, InfoResponse, InfoRequest, PipQuery, InfoResponse,
            ProvisionalUpdate, InfoRequest, PipQuery, InfoResponse, Decision,
        ] {
            obs.record(s);
        }
        assert_eq!(
            obs.collapsed(),
            vec![PdpNotify, InfoRequest, PipQuery, InfoResponse, ProvisionalUpdate, InfoRequest, PipQuery, InfoResponse, Decision]
        );
    }
}
