# Copyright 2026 The dilfcn Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Dilated fully convolutional segmentation networks."""

from dilfcn._core import (
    DataError,
    Error,
    Graph,
    GraphError,
    NumericError,
    ParseError,
    ShapeError,
    analysis_csv,
    analyze,
    build_architecture,
    compare_csv,
    confusion_matrix,
    count_parameters,
    decode_weights,
    effective_kernel,
    encode_weights,
    estimate_memory,
    evaluate,
    exp_dilation_rf,
    forward,
    gradcheck,
    init_weights,
    load_spec,
    load_weights,
    parse_spec,
    predict,
    receptive_field_chain,
    run_cli,
    save_spec,
    save_weights,
    scores,
    synth_dataset,
    train,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
