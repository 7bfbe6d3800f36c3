# vim: set filetype=python fileencoding=utf-8:
# -*- coding: utf-8 -*-

#============================================================================#
#                                                                            #
#  Licensed under the Apache License, Version 2.0 (the "License");           #
#  you may not use this file except in compliance with the License.          #
#  You may obtain a copy of the License at                                   #
#                                                                            #
#      http://www.apache.org/licenses/LICENSE-2.0                            #
#                                                                            #
#  Unless required by applicable law or agreed to in writing, software       #
#  distributed under the License is distributed on an "AS IS" BASIS,         #
#  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.  #
#  See the License for the specific language governing permissions and       #
#  limitations under the License.                                            #
#                                                                            #
#============================================================================#



''' Run configuration loading and validation.

    A configuration document is JSON or TOML with the tables ``cluster``,
    ``simulation``, ``gradients``, and ``adaptive``. Only ``cluster`` is
    required; it either lists node coefficients with the synchronization
    model or names a registered reference cluster as ``preset``.
'''


from tomli import loads as _toml_loads

from . import __
from . import exceptions as _exceptions
from . import models as _models
from . import simulator as _simulator
from . import training as _training


PathLike: __.typx.TypeAlias = str | __.pathlib.Path
Table: __.typx.TypeAlias = __.cabc.Mapping[ str, __.typx.Any ]

SEED_VARIABLE = 'OPTPERF_SEED'


class ConfigurationInvalidity( _exceptions.Omnierror, ValueError ):
    ''' Configuration file invalidity. '''

    def __init__( self, location: PathLike, reason: str ) -> None:
        self.location = str( location )
        self.reason = reason
        super( ).__init__( f'Invalid configuration at {location}: {reason}' )


class ConfigurationAbsence( _exceptions.Omnierror, FileNotFoundError ):
    ''' Configuration file absence. '''

    def __init__( self, location: PathLike ) -> None:
        self.location = str( location )
        super( ).__init__( f'Configuration file not found: {location}' )


class RunConfiguration( __.immut.DataclassObject ):
    ''' Simulated world and adaptation settings of one run. '''

    world: __.typx.Annotated[
        _simulator.TruthWorld,
        __.ddoc.Doc( 'True cluster, noise levels, and gradient moments.' ) ]
    adaptive: __.typx.Annotated[
        _training.AdaptiveSettings,
        __.ddoc.Doc( 'Batch size range and epoch structure.' ) ]

    @property
    def cluster( self ) -> _models.ClusterSpec:
        ''' True cluster specification. '''
        return self.world.true_spec

    def with_seed( self, seed: int ) -> __.typx.Self:
        ''' Returns copy of configuration with another seed. '''
        world = __.dcls.replace( self.world, seed = seed )
        return type( self )( world = world, adaptive = self.adaptive )

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders configuration as loadable document. '''
        world = self.world
        adaptive = self.adaptive
        simulation: dict[ str, __.typx.Any ] = {
            'seed': world.seed,
            'noise_cv': world.noise_cv,
            'n_buckets': world.n_buckets,
            'batches_per_epoch': adaptive.batches_per_epoch,
            'epochs': adaptive.epochs,
        }
        if not __.is_absent( world.gamma_noise_cvs ):
            simulation[ 'gamma_noise_cvs' ] = list( world.gamma_noise_cvs )
        gradients = world.gradients
        adaptive_table: dict[ str, __.typx.Any ] = {
            'b_min': adaptive.b_min,
            'b_max': adaptive.b_max,
            'candidates': adaptive.candidates,
        }
        for name in ( 'b_ref', 'initial_batch', 'fixed_batch' ):
            value = getattr( adaptive, name )
            if not __.is_absent( value ): adaptive_table[ name ] = value
        return {
            'cluster': _render_cluster( world.true_spec ),
            'simulation': simulation,
            'gradients': {
                'dimension': gradients.dimension,
                'true_g_sq': gradients.true_g_sq,
                'tr_sigma': gradients.tr_sigma,
                'tr_sigma_decay': gradients.tr_sigma_decay,
                'ema_decay': adaptive.ema_decay,
            },
            'adaptive': adaptive_table,
        }


def _produce_three_node( ) -> _models.ClusterSpec:
    coefficients = (
        ( 0.0004, 0.010, 0.0008, 0.020 ),
        ( 0.0006, 0.012, 0.0012, 0.025 ),
        ( 0.0010, 0.015, 0.0020, 0.030 ),
    )
    return _produce_cluster( coefficients )


def _produce_sixteen_node( ) -> _models.ClusterSpec:
    # Four device generations, four nodes each.
    factors = ( 1.0, 1.5, 2.2, 3.0 )
    coefficients = tuple(
        ( 0.0002 * factor, 0.008 * factor ** 0.5,
          0.0004 * factor, 0.015 * factor ** 0.5 )
        for factor in factors for _ in range( 4 ) )
    return _produce_cluster( coefficients )


def _produce_cluster(
    coefficients: __.cabc.Sequence[ tuple[ float, float, float, float ] ]
) -> _models.ClusterSpec:
    nodes = tuple(
        _models.NodeComputeModel( node_id = i, q = q, s = s, k = k, m = m )
        for i, ( q, s, k, m ) in enumerate( coefficients ) )
    comm = _models.CommModel( gamma = 0.3, t_o = 0.15, t_u = 0.05 )
    return _models.ClusterSpec( nodes = nodes, comm = comm )


cluster_presets: __.accret.Dictionary[
    str, __.cabc.Callable[ [ ], _models.ClusterSpec ]
] = __.accret.Dictionary( {
    'three-node': _produce_three_node,
    'sixteen-node': _produce_sixteen_node,
} )


def load_configuration(
    location: PathLike,
    environment: __.Absential[ __.cabc.Mapping[ str, str ] ] = __.absent,
) -> RunConfiguration:
    ''' Loads configuration from JSON or TOML file.

        The seed variable of the environment, if set, overrides the seed
        of the document.
    '''
    file_path = __.pathlib.Path( location )
    try: content = file_path.read_text( encoding = 'utf-8' )
    except ( OSError, IOError ) as exception:
        raise ConfigurationAbsence( location ) from exception
    if file_path.suffix == '.toml':
        try: data: __.typx.Any = _toml_loads( content )
        except Exception as exception:
            raise ConfigurationInvalidity(
                location, f'Invalid TOML syntax: {exception}' ) from exception
    else:
        try: data = __.json.loads( content )
        except ValueError as exception:
            raise ConfigurationInvalidity(
                location, f'Invalid JSON syntax: {exception}' ) from exception
    if not isinstance( data, dict ):
        raise ConfigurationInvalidity(
            location, 'Document must be a table at top level' )
    configuration = parse_configuration(
        __.typx.cast( Table, data ), location )
    if __.is_absent( environment ): environment = __.os.environ
    seed = _parse_seed_override( environment )
    if __.is_absent( seed ): return configuration
    return configuration.with_seed( seed )


def parse_configuration(
    data: Table, location: PathLike
) -> RunConfiguration:
    ''' Parses configuration document into value objects. '''
    cluster = _parse_cluster(
        _parse_table( data, 'cluster', location, required = True ),
        location )
    simulation = _parse_table( data, 'simulation', location )
    gradients = _parse_table( data, 'gradients', location )
    adaptive = _parse_table( data, 'adaptive', location )
    try:
        truth = _simulator.GradientTruth(
            dimension = _parse_int(
                gradients, 'dimension', location, 256, minimum = 1 ),
            true_g_sq = _parse_float( gradients, 'true_g_sq', location, 1.0 ),
            tr_sigma = _parse_float( gradients, 'tr_sigma', location, 100.0 ),
            tr_sigma_decay = _parse_float(
                gradients, 'tr_sigma_decay', location, 1.0 ) )
        world = _simulator.TruthWorld(
            true_spec = cluster,
            noise_cv = _parse_float( simulation, 'noise_cv', location, 0.05 ),
            gamma_noise_cvs = _parse_float_sequence(
                simulation, 'gamma_noise_cvs', location ),
            n_buckets = _parse_int(
                simulation, 'n_buckets', location, 8, minimum = 2 ),
            gradients = truth,
            seed = _parse_int( simulation, 'seed', location, 0 ) )
        settings = _training.AdaptiveSettings(
            b_min = _parse_int(
                adaptive, 'b_min', location, 64, minimum = 1 ),
            b_max = _parse_int(
                adaptive, 'b_max', location, 1024, minimum = 1 ),
            candidates = _parse_int(
                adaptive, 'candidates', location, 8, minimum = 1 ),
            b_ref = _parse_optional_int( adaptive, 'b_ref', location ),
            initial_batch = _parse_optional_int(
                adaptive, 'initial_batch', location ),
            fixed_batch = _parse_optional_int(
                adaptive, 'fixed_batch', location ),
            batches_per_epoch = _parse_int(
                simulation, 'batches_per_epoch', location, 50, minimum = 1 ),
            epochs = _parse_int(
                simulation, 'epochs', location, 10, minimum = 1 ),
            ema_decay = _parse_float(
                gradients, 'ema_decay', location, 0.9 ) )
    except ( _exceptions.DomainInvalidity,
             _exceptions.AllocationMismatch ) as exception:
        raise ConfigurationInvalidity(
            location, str( exception ) ) from exception
    _validate_batch_sizes( settings, cluster.size, location )
    return RunConfiguration( world = world, adaptive = settings )


def _parse_cluster( data: Table, location: PathLike ) -> _models.ClusterSpec:
    ''' Parses cluster table, either preset or explicit nodes. '''
    if 'preset' in data:
        name: __.typx.Any = data[ 'preset' ]
        if not isinstance( name, str ) or name not in cluster_presets:
            available = ', '.join( sorted( cluster_presets ) )
            raise ConfigurationInvalidity(
                location,
                f'Unknown cluster preset {name!r}; available: {available}' )
        return cluster_presets[ name ]( )
    if 'nodes' not in data:
        raise ConfigurationInvalidity(
            location, 'Table "cluster" needs "nodes" or "preset"' )
    entries: __.typx.Any = data[ 'nodes' ]
    if not isinstance( entries, list ) or not entries:
        raise ConfigurationInvalidity(
            location, '"nodes" must be a non-empty list of tables' )
    nodes: list[ _models.NodeComputeModel ] = [ ]
    caps: list[ float ] = [ ]
    for i, entry in enumerate( __.typx.cast( list[ __.typx.Any ], entries ) ):
        if not isinstance( entry, dict ):
            typename = type( entry ).__name__
            raise ConfigurationInvalidity(
                location, f'"nodes"[{i}] must be a table, got {typename}' )
        node = __.typx.cast( Table, entry )
        values = {
            name: _parse_float( node, name, location )
            for name in ( 'q', 's', 'k', 'm' ) }
        cap = _parse_optional_int( node, 'max_local_batch', location )
        caps.append( __.math.inf if __.is_absent( cap ) else float( cap ) )
        try:
            nodes.append( _models.NodeComputeModel( node_id = i, **values ) )
        except _exceptions.DomainInvalidity as exception:
            raise ConfigurationInvalidity(
                location, f'"nodes"[{i}]: {exception}' ) from exception
    try:
        comm = _models.CommModel(
            gamma = _parse_float( data, 'gamma', location ),
            t_o = _parse_float( data, 't_o', location ),
            t_u = _parse_float( data, 't_u', location ) )
        return _models.ClusterSpec(
            nodes = tuple( nodes ), comm = comm,
            caps = (
                tuple( caps ) if any( map( __.math.isfinite, caps ) )
                else __.absent ) )
    except _exceptions.DomainInvalidity as exception:
        raise ConfigurationInvalidity(
            location, str( exception ) ) from exception


def _parse_float(
    data: Table,
    key: str,
    location: PathLike,
    default: __.Absential[ float ] = __.absent,
) -> float:
    ''' Parses real number; required unless default given. '''
    if key not in data:
        if __.is_absent( default ):
            raise ConfigurationInvalidity(
                location, f'Missing required key "{key}"' )
        return default
    value = data[ key ]
    if isinstance( value, bool ) or not isinstance( value, ( int, float ) ):
        typename = type( value ).__name__
        raise ConfigurationInvalidity(
            location, f'"{key}" must be a number, got {typename}' )
    return float( value )


def _parse_float_sequence(
    data: Table, key: str, location: PathLike
) -> __.Absential[ tuple[ float, ... ] ]:
    ''' Parses optional list of real numbers. '''
    if key not in data: return __.absent
    value: __.typx.Any = data[ key ]
    if not isinstance( value, list ):
        typename = type( value ).__name__
        raise ConfigurationInvalidity(
            location, f'"{key}" must be a list of numbers, got {typename}' )
    items = __.typx.cast( list[ __.typx.Any ], value )
    return tuple(
        _parse_float( { f'{key}[{i}]': item }, f'{key}[{i}]', location )
        for i, item in enumerate( items ) )


def _parse_int(
    data: Table,
    key: str,
    location: PathLike,
    default: int,
    minimum: int = 0,
) -> int:
    ''' Parses integer with default and lower bound. '''
    value = _parse_optional_int( data, key, location, minimum )
    return default if __.is_absent( value ) else value


def _parse_optional_int(
    data: Table,
    key: str,
    location: PathLike,
    minimum: int = 1,
) -> __.Absential[ int ]:
    ''' Parses optional integer value from configuration. '''
    if key not in data:
        return __.absent
    value = data[ key ]
    if isinstance( value, bool ) or not isinstance( value, int ):
        typename = type( value ).__name__
        raise ConfigurationInvalidity(
            location, f'"{key}" must be an integer, got {typename}' )
    if value < minimum:
        raise ConfigurationInvalidity(
            location, f'"{key}" must be at least {minimum}, got {value}' )
    return value


def _parse_seed_override(
    environment: __.cabc.Mapping[ str, str ]
) -> __.Absential[ int ]:
    text = environment.get( SEED_VARIABLE, '' ).strip( )
    if not text: return __.absent
    try: seed = int( text )
    except ValueError as exception:
        raise ConfigurationInvalidity(
            SEED_VARIABLE, f'must be an integer, got {text!r}'
        ) from exception
    if seed < 0:
        raise ConfigurationInvalidity(
            SEED_VARIABLE, f'must be non-negative, got {seed}' )
    return seed


def _parse_table(
    data: Table, key: str, location: PathLike, required: bool = False
) -> Table:
    if key not in data:
        if required:
            raise ConfigurationInvalidity(
                location, f'Missing required table "{key}"' )
        return { }
    value: __.typx.Any = data[ key ]
    if not isinstance( value, dict ):
        typename = type( value ).__name__
        raise ConfigurationInvalidity(
            location, f'"{key}" must be a table, got {typename}' )
    return __.typx.cast( Table, value )


def _render_cluster( spec: _models.ClusterSpec ) -> dict[ str, __.typx.Any ]:
    nodes: list[ dict[ str, __.typx.Any ] ] = [ ]
    caps = spec.produce_caps( )
    for node, cap in zip( spec.nodes, caps ):
        entry = node.render_as_json( )
        del entry[ 'node_id' ]
        if __.math.isfinite( cap ): entry[ 'max_local_batch' ] = int( cap )
        nodes.append( entry )
    return { 'nodes': nodes, **spec.comm.render_as_json( ) }


def _validate_batch_sizes(
    settings: _training.AdaptiveSettings, size: int, location: PathLike
) -> None:
    for name in ( 'b_min', 'initial_batch', 'fixed_batch' ):
        value = getattr( settings, name )
        if __.is_absent( value ) or value >= size: continue
        raise ConfigurationInvalidity(
            location,
            f'"{name}" must be at least the node count {size}, got {value}' )
