# Copyright 2026, the overlaysim authors
#
# This library is free software; you can redistribute it and/or
# modify it either under the terms of:
#
#   the EUPL, Version 1.1 or – as soon they will be approved by the
#   European Commission - subsequent versions of the EUPL (the
#   "Licence"). You may obtain a copy of the Licence at:
#   https://joinup.ec.europa.eu/software/page/eupl
#
# or
#
#   the terms of the Mozilla Public License, v. 2.0. If a copy of the
#   MPL was not distributed with this file, You can obtain one at
#   http://mozilla.org/MPL/2.0/.
#
# If you do not alter this notice, a recipient may use your version of
# this file under either the MPL or the EUPL.
from .config import (
    Config,
    ConfigError,
    DomainError,
    NetworkConfig,
    OverlaySimError,
)
from .geometry import (
    PRIMARY,
    SECONDARY,
    CellGrid,
    Deployment,
    TierDeployment,
    build_grid,
    deploy,
    from_points,
    locate_cell,
    pair_sources_destinations,
    sample_poisson_nodes,
)
from .protocol import (
    BLOCKED,
    SLOTS,
    PreservationSpec,
    Schedule,
    compute_M,
    opportunistic_factor,
    preservation_mask,
    primary_active_cell,
    secondary_active_cell,
)
from .phy import (
    DivergenceError,
    bound_set,
    link_rate,
    pathloss,
    series_bound,
    series_sum,
)
from .routing import (
    PathSet,
    StalledCellError,
    build_path,
    count_paths,
    designated_relay,
)
from .flow import (
    FlowError,
    InstabilityError,
    MetricsRecord,
    UndefinedDelayError,
    measure_delay,
    measure_throughput,
    run_frames,
)
from .analysis import (
    AnalysisError,
    SweepResult,
    chernoff_tail,
    fit_scaling,
    validate_occupancy,
    verify_tradeoff,
)
from . import cacheutils
