from .bundled import account_spec, bank_catalog, money_transfer_spec
from .codec import expr_from_json, expr_to_json, spec_from_json, spec_to_json
from .expr import evaluate, infer_kind
from .model import (
    ActionDef, EntitySpec, EntityState, FieldDecl, MissingBindingError, NotEnabledError, Param,
    SpecError, SpecValidationError, SyncAction, SyncTemplate, UnknownActionError, apply_effect,
    bind_args, eval_guard, new_state, next_state, sync_ops, validate_catalog, validate_spec,
)
from .parser import ParseError, parse_spec, parse_specs
from .values import Kind, KindError, Money, Value, decode_value, encode_value, kind_of
