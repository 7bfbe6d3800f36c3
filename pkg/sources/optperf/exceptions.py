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



''' Family of exceptions for package API. '''


from . import __


class Omniexception( __.immut.exceptions.Omniexception ):
    ''' Base for all exceptions raised by package API. '''


class Omnierror( Omniexception, Exception ):
    ''' Base for error exceptions raised by package API. '''

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders exception as JSON-compatible dictionary. '''
        return {
            'type': self.__class__.__name__,
            'message': str( self ),
        }

    def render_as_text( self ) -> tuple[ str, ... ]:
        ''' Renders exception as text lines. '''
        return (
            f'## {self.__class__.__name__}',
            f'**Message**: {self}',
        )


class _ContextualError( Omnierror ):
    ''' Error with a single named context entry for rendering. '''

    context_label: __.typx.ClassVar[ str ] = 'Context'

    def __init__( self, message: str, context: str ) -> None:
        super( ).__init__( message )
        self.context = context

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders exception with context information. '''
        return {
            'type': self.__class__.__name__,
            'message': str( self ),
            self.context_label.lower( ): self.context,
        }

    def render_as_text( self ) -> tuple[ str, ... ]:
        ''' Renders exception with context information. '''
        return (
            f'## {self.__class__.__name__}',
            f'**Message**: {self}',
            f'**{self.context_label}**: {self.context}',
        )


# Model exceptions
class DomainInvalidity( _ContextualError, ValueError ):
    ''' Raised when a quantity lies outside its valid domain. '''

    context_label = 'Parameter'

    def __init__( self, parameter: str, reason: str ) -> None:
        super( ).__init__(
            f'Invalid value for {parameter!r}: {reason}', parameter )


class ModelSingularity( _ContextualError, ArithmeticError ):
    ''' Raised when a performance model has a zero time slope. '''

    context_label = 'Node'

    def __init__( self, node_id: int, slope: str ) -> None:
        super( ).__init__(
            f'Node {node_id} has zero {slope} slope; '
            'time does not grow with batch size.', str( node_id ) )


class AllocationMismatch( _ContextualError, ValueError ):
    ''' Raised when an allocation does not match the cluster size. '''

    context_label = 'Sizes'

    def __init__( self, expected: int, actual: int ) -> None:
        super( ).__init__(
            f'Allocation has {actual} local batches; '
            f'cluster has {expected} nodes.', f'{expected}/{actual}' )


# Solver exceptions
class AllocationInfeasibility( _ContextualError, ValueError ):
    ''' Raised when no allocation can satisfy the batch constraints. '''

    context_label = 'Constraint'

    def __init__( self, total: int, constraint: str ) -> None:
        super( ).__init__(
            f'Total batch size {total} is infeasible: {constraint}',
            constraint )
        self.total = total


class OracleSizeExcess( _ContextualError, ValueError ):
    ''' Raised when an exhaustive search grid would be too large. '''

    context_label = 'Points'

    def __init__( self, points: int, limit: int ) -> None:
        super( ).__init__(
            f'Search grid of {points} points exceeds limit of {limit}.',
            str( points ) )


class CandidatesAbsence( Omnierror, ValueError ):
    ''' Raised when no batch size candidate is feasible. '''

    def __init__( self ) -> None:
        super( ).__init__( 'No feasible total batch size candidate.' )


# Estimation exceptions
class ObservationsInsufficiency( _ContextualError, ValueError ):
    ''' Raised when telemetry cannot determine a model. '''

    context_label = 'Node'

    def __init__( self, node_id: int, reason: str ) -> None:
        super( ).__init__(
            f'Insufficient observations for node {node_id}: {reason}',
            str( node_id ) )


class EstimatorInvalidity( _ContextualError, ValueError ):
    ''' Raised when estimator inputs violate their preconditions. '''

    context_label = 'Estimator'

    def __init__( self, estimator: str, reason: str ) -> None:
        super( ).__init__(
            f'Cannot evaluate {estimator}: {reason}', estimator )
