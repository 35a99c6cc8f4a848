from django.apps import AppConfig


class PhasespaceConfig(AppConfig):
    name = 'phasespace'
    verbose_name = 'Symplectic potentials and currents'
