//! Rule-based responses for stub mode. Each role delegates to the module
//! that owns the corresponding payload format.

use super::{GatewayError, GatewayRequest, Role};

pub(super) fn respond(request: &GatewayRequest) -> Result<String, GatewayError> {
    let result = match request.role {
        Role::Propose => crate::extract::stub_propose(&request.payload),
        Role::Judge => crate::extract::stub_judge(&request.payload),
        Role::Generate => crate::plan::stub_generate(&request.payload),
        Role::PlanJudge => crate::eval::stub_plan_judge(&request.payload),
        Role::Extract => crate::graph::stub_extract(&request.payload),
        Role::Embed => crate::retrieval::stub_embed_response(&request.payload),
    };
    result.map_err(|reason| GatewayError::Stub {
        role: request.role,
        reason,
    })
}
