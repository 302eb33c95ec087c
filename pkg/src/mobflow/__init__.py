"""Zone-based mobility flow estimation.

Pipeline: discretize the settled area into square zones, weight POI
opportunities by rank-size demand, build the zone-to-zone commutation
potential graph, evolve probabilistically filtered daily trips, and assign
the surviving trips to road segments under risk-neutral shortest-path
equilibrium.
"""

__version__ = "0.1.0"

from .behavior import (
    BehaviorModel,
    LevyParams,
    ModalityProfile,
    MotifParams,
    PteDistribution,
    exploration_ratio,
    levy_pdf,
    motif_weight,
    pte_density,
    radius_of_gyration,
)
from .config import ScenarioConfig, load_scenario
from .demand import DemandWeights, PoiCategory, aggregate_wpo, normalize_weights, poi_probability
from .errors import (
    ConfigValidationError,
    DegenerateNormalizationError,
    InputError,
    MobflowError,
    ParameterError,
    UnboundedMarginError,
)
from .geometry import (
    GeoPoint,
    LivingCluster,
    TargetArea,
    Zone,
    ZoneGrid,
    assign_population,
    build_target_area,
    make_grid,
    pte_margin,
)
from .potential import (
    PotentialGraph,
    RadiationParams,
    build_gwpc,
    gravity_probability,
    p_greater,
    radiation_alpha,
    radiation_probability,
    s_track,
)
from .tripgen import EvolutionConfig, Trip, evolve_trips, generate_all, trip_realisticity
from .assign import (
    LoadMap,
    PathFlow,
    RoadNetwork,
    Segment,
    accumulate_loads,
    path_flows,
    shortest_path,
    snap_zone_to_node,
)
from .pipeline import RunReport, run_pipeline
from .synth import SynthSpec, synth_scenario
