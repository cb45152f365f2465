from .subnet_forge import SubnetForge
