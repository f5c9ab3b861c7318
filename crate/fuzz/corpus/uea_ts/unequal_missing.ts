@problemName tiny
@timeStamps false
@missing true
@univariate false
@dimensions 2
@equalLength false
@classLabel true a b
@data
1.0,2.0,?:3.0,4.0,5.0:a
6.0:7.0:b
